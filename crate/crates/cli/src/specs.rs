//! Parsers for domain, payoff and strategy selectors.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use towlab_core::game::{greedy_strategy, pull_toward, Mode, Strategy};
use towlab_core::{Domain, Lattice, LatticeField};

use crate::settings::parse_list;

/// `interval:a,b`, `box:lo1,..,lon,hi1,..,hin` or `ball:c1,..,cn,r`.
pub fn parse_domain(s: &str) -> Result<Domain> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| anyhow!("domain '{s}' should look like interval:0,1"))?;
    let v = parse_list(rest)?;
    let domain = match kind.trim() {
        "interval" => {
            if v.len() != 2 {
                bail!("interval needs two endpoints");
            }
            Domain::interval(v[0], v[1])?
        }
        "box" => {
            if v.len() < 2 || v.len() % 2 != 0 {
                bail!("box needs lo and hi corners of equal dimension");
            }
            let n = v.len() / 2;
            Domain::cube(v[..n].to_vec(), v[n..].to_vec())?
        }
        "ball" => {
            if v.len() < 2 {
                bail!("ball needs a center and a radius");
            }
            let n = v.len() - 1;
            Domain::ball(v[..n].to_vec(), v[n])?
        }
        other => bail!("unknown domain kind '{other}' (interval, box, ball)"),
    };
    Ok(domain)
}

/// Boundary payoff selectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PayoffSpec {
    /// `x_1`
    Linear,
    /// `|x|^2`
    Quadratic,
    Const(f64),
    /// 1 where `x_1 >= c`, else 0.
    Step(f64),
}

impl PayoffSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "linear" => Ok(PayoffSpec::Linear),
            "quadratic" => Ok(PayoffSpec::Quadratic),
            _ => {
                let (kind, arg) =
                    s.split_once(':').ok_or_else(|| anyhow!("unknown payoff '{s}' (linear, quadratic, const:C, step:C)"))?;
                let c = crate::settings::parse_f64(arg)?;
                if !c.is_finite() {
                    bail!("payoff parameter must be finite");
                }
                match kind {
                    "const" => Ok(PayoffSpec::Const(c)),
                    "step" => Ok(PayoffSpec::Step(c)),
                    other => bail!("unknown payoff '{other}' (linear, quadratic, const:C, step:C)"),
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            PayoffSpec::Linear => x[0],
            PayoffSpec::Quadratic => x.iter().map(|v| v * v).sum(),
            PayoffSpec::Const(c) => c,
            PayoffSpec::Step(c) => {
                if x[0] >= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn parse_point(s: &str, n: usize, key: &str) -> Result<Vec<f64>> {
    let v = parse_list(s).with_context(|| format!("invalid point for {key}"))?;
    if v.len() != n {
        bail!("{key} has {} coordinates, expected {n}", v.len());
    }
    Ok(v)
}

/// `greedy` (solve in-process), `greedy:PATH` (field CSV) or `pull:x1,..,xn`.
pub enum StrategySpec {
    Greedy(Option<String>),
    Pull(Vec<f64>),
}

impl StrategySpec {
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let s = s.trim();
        if s == "greedy" {
            return Ok(StrategySpec::Greedy(None));
        }
        if let Some(path) = s.strip_prefix("greedy:") {
            return Ok(StrategySpec::Greedy(Some(path.to_string())));
        }
        if let Some(target) = s.strip_prefix("pull:") {
            return Ok(StrategySpec::Pull(parse_point(target, n, "pull target")?));
        }
        bail!("unknown strategy '{s}' (greedy, greedy:PATH, pull:x1,..,xn)")
    }

    pub fn needs_solve(&self) -> bool {
        matches!(self, StrategySpec::Greedy(None))
    }

    pub fn build(
        &self,
        mode: Mode,
        lattice: &Arc<Lattice>,
        solved: Option<&LatticeField>,
    ) -> Result<Box<dyn Strategy>> {
        Ok(match self {
            StrategySpec::Pull(t) => Box::new(pull_toward(t.clone())),
            StrategySpec::Greedy(None) => {
                Box::new(greedy_strategy(solved.expect("field solved for greedy").clone(), mode))
            }
            StrategySpec::Greedy(Some(path)) => {
                let file = std::fs::File::open(Path::new(path)).with_context(|| format!("opening field {path}"))?;
                let field = LatticeField::read_csv(lattice.clone(), file).with_context(|| format!("reading field {path}"))?;
                Box::new(greedy_strategy(field, mode))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domains() {
        assert_eq!(parse_domain("interval:0,1").unwrap().dim(), 1);
        assert_eq!(parse_domain("box:0,0,1,2").unwrap().dim(), 2);
        assert_eq!(parse_domain("ball:0,0,0,1").unwrap().dim(), 3);
        assert!(parse_domain("box:0,0,1").is_err());
        assert!(parse_domain("square:0,1").is_err());
    }

    #[test]
    fn payoffs() {
        assert_eq!(PayoffSpec::parse("step:1").unwrap().eval(&[1.0]), 1.0);
        assert_eq!(PayoffSpec::parse("const:5").unwrap().eval(&[0.3]), 5.0);
        assert_eq!(PayoffSpec::parse("quadratic").unwrap().eval(&[3.0, 4.0]), 25.0);
        assert!(PayoffSpec::parse("cubic").is_err());
    }

    #[test]
    fn strategies() {
        assert!(StrategySpec::parse("greedy", 1).unwrap().needs_solve());
        assert!(!StrategySpec::parse("greedy:f.csv", 1).unwrap().needs_solve());
        assert!(StrategySpec::parse("pull:1,2", 1).is_err());
        assert!(StrategySpec::parse("random", 1).is_err());
    }
}
