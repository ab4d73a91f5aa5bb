use anyhow::{anyhow, Context};
use hybridmac_core::config::{Scenario, SweepAxes};
use hybridmac_core::FramePlan;

use crate::{Args, Failure};

/// Scenario with command-line overrides applied, and the plan file if any.
pub struct Resolved {
    pub scenario: Scenario,
    pub plan: Option<FramePlan>,
}

/// Parses `alpha=0.5,1,p_inl=0.1,0.2`: a token with `=` starts an axis,
/// bare tokens extend the current one.
pub fn parse_sweep(text: &str) -> anyhow::Result<SweepAxes> {
    let mut axes = SweepAxes::default();
    let mut current: Option<String> = None;
    for token in text.split([',', ';']).map(str::trim).filter(|t| !t.is_empty()) {
        let value = match token.split_once('=') {
            Some((name, value)) => {
                current = Some(name.trim().to_ascii_lowercase());
                value.trim()
            }
            None => token,
        };
        let name = current.as_deref().ok_or_else(|| anyhow!("sweep value `{token}` has no axis name"))?;
        match name {
            "alpha" => axes.alpha.push(value.parse().with_context(|| format!("alpha value `{value}`"))?),
            "p_inl" | "p" => axes.p_inl.push(value.parse().with_context(|| format!("p_inl value `{value}`"))?),
            "lambda" => axes.lambda.push(value.parse().with_context(|| format!("lambda value `{value}`"))?),
            "k" => axes.k.push(value.parse().with_context(|| format!("k value `{value}`"))?),
            other => return Err(anyhow!("unknown sweep axis `{other}` (expected alpha, p_inl, lambda or k)")),
        }
    }
    if axes.is_empty() {
        return Err(anyhow!("empty sweep"));
    }
    Ok(axes)
}

pub fn resolve(args: &Args) -> Result<Resolved, Failure> {
    let mut s = match &args.scenario {
        Some(path) => Scenario::load(path).map_err(|e| Failure::Config(anyhow!(e)))?,
        None => Scenario::default(),
    };
    if let Some(v) = args.variant {
        s.variant = v;
    }
    if let Some(seeds) = &args.seeds {
        s.seeds = seeds.0.clone();
    }
    if let Some(l) = args.lambda {
        s.classes.lambda = l;
    }
    if let Some(a) = args.alpha {
        s.classes.alpha = a;
    }
    if let Some(p) = args.p_inl {
        s.classes.p_inl = p;
    }
    if let Some(c) = &args.classes {
        s.classes.class_sizes = c.clone();
        s.classes.block_order = None;
    }
    if let Some(p) = args.csma_p {
        s.csma_p = Some(p);
    }
    if let Some(g) = args.grid {
        s.grid = g;
    }
    if let Some(text) = &args.sweep {
        s.sweep = Some(parse_sweep(text).map_err(Failure::Usage)?);
    }

    let plan = match &args.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading plan {}", path.display()))
                .map_err(Failure::Config)?;
            let plan = FramePlan::from_toml(&text).map_err(|e| Failure::Config(anyhow!(e)))?;
            s.classes.alpha = plan.alpha_opt;
            s.classes.p_inl = plan.p_inl_opt;
            if args.frames.is_none() {
                s.frames = plan.horizon();
            }
            Some(plan)
        }
        None => None,
    };
    if let Some(f) = args.frames {
        s.frames = f;
    }
    s.validate().map_err(|e| Failure::Config(anyhow!(e)))?;
    Ok(Resolved { scenario: s, plan })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_axes_parse() {
        let axes = parse_sweep("alpha=0.5,1,p_inl=0.1;lambda=1,2,4").unwrap();
        assert_eq!(axes.alpha, vec![0.5, 1.0]);
        assert_eq!(axes.p_inl, vec![0.1]);
        assert_eq!(axes.lambda, vec![1.0, 2.0, 4.0]);
        assert!(axes.k.is_empty());
        assert!(parse_sweep("0.5").is_err());
        assert!(parse_sweep("beta=1").is_err());
        assert!(parse_sweep("k=ten").is_err());
    }
}
