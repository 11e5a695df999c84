//! `key = value` run descriptions for the simulator.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::Reduction;

use super::train::TrainConfig;
use super::world::WorldConfig;

/// World and training settings read from a `key = value` file.
///
/// Blank lines and `#` comments are ignored; unset keys keep their
/// defaults. `seed` seeds both the data and the model initialization unless
/// `model_seed` is given.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
}

/// Accepted keys, with aliases, for help text.
pub const KEYS: &[(&str, &str)] = &[
    ("branching | B", "children per internal node"),
    ("depth | L", "tree levels including the root"),
    ("features | F", "feature dimension"),
    ("sigma", "sample noise around the class prototype"),
    ("n_images", "weakly labelled images"),
    ("proposals", "proposals per weak image"),
    ("coarseness", "tree level of the weak image label"),
    ("objects", "distinct leaf objects per weak image"),
    ("det_per_leaf", "fully labelled samples per leaf"),
    ("test_per_leaf", "held-out samples per leaf"),
    ("seed", "data seed (and model seed unless model_seed is set)"),
    ("model_seed", "model initialization seed"),
    ("method", "raw-assign | self-train | lhst"),
    ("iters", "gradient steps"),
    ("lr", "learning rate"),
    ("t | threshold", "pseudo-label confidence threshold"),
    ("reduction", "sum | mean"),
    ("confirm_pseudo", "true | false: argmax-confirmed expanded classes get weight 1"),
];

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, format!("bad value {raw:?} for {key}")))
}

impl SimConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        let mut model_seed = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, val) = body
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected key = value, got {body:?}")))?;
            let (key, val) = (key.trim(), val.trim());
            let w = &mut cfg.world;
            let t = &mut cfg.train;
            match key {
                "branching" | "B" => w.branching = value(line, key, val)?,
                "depth" | "L" => w.depth = value(line, key, val)?,
                "features" | "F" => w.features = value(line, key, val)?,
                "sigma" => w.sigma = value(line, key, val)?,
                "n_images" => w.n_images = value(line, key, val)?,
                "proposals" => w.proposals_per_image = value(line, key, val)?,
                "coarseness" => w.coarseness = value(line, key, val)?,
                "objects" => w.objects_per_image = value(line, key, val)?,
                "det_per_leaf" => w.det_per_leaf = value(line, key, val)?,
                "test_per_leaf" => w.test_per_leaf = value(line, key, val)?,
                "seed" => w.seed = value(line, key, val)?,
                "model_seed" => model_seed = Some(value(line, key, val)?),
                "method" => t.method = val.parse().map_err(|e: Error| Error::parse(line, e.to_string()))?,
                "iters" => t.iters = value(line, key, val)?,
                "lr" => t.lr = value(line, key, val)?,
                "t" | "threshold" => t.threshold = value(line, key, val)?,
                "confirm_pseudo" => t.confirm_pseudo = value(line, key, val)?,
                "reduction" => {
                    t.reduction = match val {
                        "sum" => Reduction::Sum,
                        "mean" => Reduction::Mean,
                        _ => return Err(Error::parse(line, format!("bad value {val:?} for reduction"))),
                    }
                }
                _ => return Err(Error::parse(line, format!("unknown key {key:?}"))),
            }
        }
        cfg.train.seed = model_seed.unwrap_or(cfg.world.seed);
        cfg.world.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::train::Method;

    #[test]
    fn defaults_and_overrides() {
        let cfg = SimConfig::parse_str("# run\nB = 2\nL=4\nsigma = 0.1 # noise\nmethod = self-train\nt=0.5\nseed=7\n\n")
            .unwrap();
        assert_eq!(cfg.world.branching, 2);
        assert_eq!(cfg.world.depth, 4);
        assert_eq!(cfg.world.sigma, 0.1);
        assert_eq!(cfg.world.features, WorldConfig::default().features);
        assert_eq!(cfg.train.method, Method::SelfTrain);
        assert_eq!(cfg.train.threshold, 0.5);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(SimConfig::parse_str("seed=7\nmodel_seed=3").unwrap().train.seed, 3);
        assert_eq!(SimConfig::parse_str("").unwrap(), SimConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        let kind = |s: &str| SimConfig::parse_str(s).unwrap_err().kind();
        assert_eq!(kind("B 2"), "ParseError");
        assert_eq!(kind("colour = red"), "ParseError");
        assert_eq!(kind("B = two"), "ParseError");
        assert_eq!(kind("method = sgd"), "ParseError");
        assert_eq!(kind("reduction = max"), "ParseError");
        assert_eq!(kind("B = 1"), "InvalidConfigError");
        assert_eq!(kind("t = 2"), "InvalidThresholdError");
        assert!(matches!(
            SimConfig::parse_str("L=3\n\nB=x").unwrap_err(),
            Error::Parse { line: 3, .. }
        ));
    }
}
