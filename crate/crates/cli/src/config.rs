//! Flat `key = value` configuration.
//!
//! One key per line, `#` starts a comment, lists are comma-separated and
//! outlier points are written `x:y`. Command-line flags are folded into the
//! same key space, so a config file and flags validate through one path.
//!
//! Keys: manifold, n, r, a, b, outliers, trials, p, P, k, kmin, kmax, eps,
//! methods, reference, delta, max_iters, seed, zero_tol.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use gpembed::harness::sweep_powers;
use gpembed::metric::DEFAULT_ZERO_TOL;
use gpembed::{ExperimentConfig, ManifoldKind, ManifoldSpec, Method, ReferenceKind, SinkhornOptions};

pub const KEYS: [&str; 19] = [
    "manifold", "n", "r", "a", "b", "outliers", "trials", "p", "P", "k", "kmin", "kmax", "eps", "methods",
    "reference", "delta", "max_iters", "seed", "zero_tol",
];

/// Outliers used when `circle_with_outliers` is given without any.
pub const DEFAULT_OUTLIERS: [[f64; 2]; 2] = [[0.0, 3.0], [3.0, 0.0]];

pub const SEED_ENV: &str = "GPEMBED_SEED";

/// Problems with user-supplied settings, keyed by the offending setting.
#[derive(Debug, Default)]
pub struct SchemaError {
    pub problems: Vec<(String, String)>,
}

impl SchemaError {
    pub fn single(key: &str, msg: impl Into<String>) -> Self {
        Self {
            problems: vec![(key.to_string(), msg.into())],
        }
    }

    pub fn keys(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.problems.iter().map(|(k, _)| k.as_str()).collect();
        set.into_iter().collect()
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid settings: {}", self.keys().join(", "))?;
        for (k, m) in &self.problems {
            write!(f, "\n  {k}: {m}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaError {}

#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut cfg = Self::default();
        let mut err = SchemaError::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                err.problems.push((format!("line {}", no + 1), format!("expected `key = value`, got `{line}`")));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                err.problems.push((k.to_string(), "unknown key".into()));
            } else if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                err.problems.push((k.to_string(), "given more than once".into()));
            }
        }
        if err.problems.is_empty() {
            Ok(cfg)
        } else {
            Err(err)
        }
    }

    /// Sets `key`, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// The `seed` entry, or the seed from the environment.
    pub fn seed(&self) -> Result<u64, SchemaError> {
        let mut f = Fields::new(self);
        let seed = f.seed();
        f.finish()?;
        Ok(seed.unwrap())
    }

    pub fn manifold_spec(&self) -> Result<ManifoldSpec, SchemaError> {
        let mut f = Fields::new(self);
        let kind = manifold_kind(&mut f);
        let n = f.require("n");
        let seed = f.seed();
        f.finish()?;
        Ok(ManifoldSpec::new(kind.unwrap(), n.unwrap(), seed.unwrap()))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, SchemaError> {
        let mut f = Fields::new(self);
        let manifold = manifold_kind(&mut f);
        let n = f.require::<usize>("n");
        let trials = f.require::<usize>("trials");
        let eps = f.require::<f64>("eps");
        let master_seed = f.seed();
        let methods = f.require_list::<Method>("methods");
        let sweep = f.get::<u32>("P");
        let reference = f.get::<ReferenceKind>("reference");

        let powers = match sweep {
            Some(exp) => {
                if f.has("p") {
                    f.fail("p", "cannot be combined with P (a power sweep sets the powers)");
                }
                if exp == 0 || exp > 30 {
                    f.fail("P", "must be between 1 and 30");
                }
                if reference == Some(ReferenceKind::Diffusion) {
                    f.fail("reference", "a power sweep compares against the euclidean reference");
                }
                Some(sweep_powers(exp))
            }
            None if f.has("P") => None,
            None => f.require::<usize>("p").map(|p| vec![p]),
        };
        let dims = dims(&mut f, sweep.is_some());

        let mut sinkhorn = SinkhornOptions::default();
        if let Some(d) = f.get("delta") {
            sinkhorn.delta = d;
        }
        if let Some(m) = f.get("max_iters") {
            sinkhorn.max_iters = m;
        }
        let zero_tol = f.get("zero_tol").unwrap_or(DEFAULT_ZERO_TOL);
        f.finish()?;

        Ok(ExperimentConfig {
            manifold: manifold.unwrap(),
            trials: trials.unwrap(),
            n: n.unwrap(),
            powers: powers.unwrap(),
            dims: dims.unwrap(),
            eps: eps.unwrap(),
            methods: methods.unwrap(),
            reference: reference.unwrap_or(if sweep.is_some() {
                ReferenceKind::Euclidean
            } else {
                ReferenceKind::Diffusion
            }),
            sinkhorn,
            master_seed: master_seed.unwrap(),
            zero_tol,
        })
    }
}

/// Typed access to a `RawConfig` that collects every problem before failing.
struct Fields<'a> {
    raw: &'a RawConfig,
    err: SchemaError,
}

impl<'a> Fields<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self {
            raw,
            err: SchemaError::default(),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.raw.entries.contains_key(key)
    }

    fn fail(&mut self, key: &str, msg: impl Into<String>) {
        self.err.problems.push((key.to_string(), msg.into()));
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw.entries.get(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(e) => {
                self.fail(key, format!("cannot parse `{v}`: {e}"));
                None
            }
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        if !self.has(key) {
            self.fail(key, "missing");
            return None;
        }
        self.get(key)
    }

    fn require_list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.raw.entries.get(key) else {
            self.fail(key, "missing");
            return None;
        };
        let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            self.fail(key, "list is empty");
            return None;
        }
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item.parse() {
                Ok(x) => out.push(x),
                Err(e) => {
                    self.fail(key, format!("cannot parse `{item}`: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// The `seed` key, falling back to the environment.
    fn seed(&mut self) -> Option<u64> {
        if self.has("seed") {
            return self.get("seed");
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => match v.trim().parse() {
                Ok(s) => Some(s),
                Err(e) => {
                    self.fail("seed", format!("{SEED_ENV}=`{v}` is not a seed: {e}"));
                    None
                }
            },
            Err(_) => {
                self.fail("seed", format!("missing (set it or export {SEED_ENV})"));
                None
            }
        }
    }

    fn finish(self) -> Result<(), SchemaError> {
        if self.err.problems.is_empty() {
            Ok(())
        } else {
            Err(self.err)
        }
    }
}

fn manifold_kind(f: &mut Fields) -> Option<ManifoldKind> {
    let name: String = f.require("manifold")?;
    match name.as_str() {
        "circle" => Some(ManifoldKind::Circle),
        "flat_torus" | "torus" => {
            let r = f.require("r");
            Some(ManifoldKind::FlatTorus { r: r? })
        }
        "klein" => {
            let (a, b) = (f.require("a"), f.require("b"));
            Some(ManifoldKind::Klein { a: a?, b: b? })
        }
        "circle_with_outliers" => {
            let outliers = match f.raw.entries.get("outliers") {
                None => DEFAULT_OUTLIERS.to_vec(),
                Some(v) => match parse_points(v) {
                    Ok(pts) => pts,
                    Err(e) => {
                        f.fail("outliers", e);
                        return None;
                    }
                },
            };
            Some(ManifoldKind::CircleWithOutliers { outliers })
        }
        other => {
            f.fail(
                "manifold",
                format!("unknown manifold `{other}` (circle, flat_torus, klein, circle_with_outliers)"),
            );
            None
        }
    }
}

/// `"0:3, 3:0"` to `[[0,3],[3,0]]`.
pub fn parse_points(s: &str) -> Result<Vec<[f64; 2]>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| format!("expected `x:y`, got `{p}`"))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
            Ok([parse(x)?, parse(y)?])
        })
        .collect()
}

fn dims(f: &mut Fields, sweep: bool) -> Option<Vec<usize>> {
    let k = f.get::<usize>("k");
    let (lo, hi) = (f.get::<usize>("kmin"), f.get::<usize>("kmax"));
    if k.is_some() && (f.has("kmin") || f.has("kmax")) {
        f.fail("k", "give either k or kmin/kmax");
        return None;
    }
    let range = match (k, lo, hi) {
        (Some(k), _, _) => k..=k,
        (None, Some(lo), Some(hi)) if lo <= hi => lo..=hi,
        (None, Some(_), Some(_)) => {
            f.fail("kmin", "must not exceed kmax");
            return None;
        }
        _ => {
            if !f.has("k") {
                f.fail("k", "missing (give k, or kmin and kmax)");
            }
            return None;
        }
    };
    if sweep && range.start() != range.end() {
        f.fail("kmax", "a power sweep uses a single k");
        return None;
    }
    Some(range.collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const OUTLIER_CFG: &str = "\
# outlier study
manifold = circle_with_outliers
outliers = 0:3, 3:0
n = 200
trials = 10
p = 4
kmin = 2
kmax = 5
eps = 0.5
methods = DMS, GPS   # compared pair
seed = 42
";

    #[test]
    fn parses_full_config() {
        let cfg = RawConfig::parse(OUTLIER_CFG).unwrap().experiment().unwrap();
        assert_eq!(cfg.dims, vec![2, 3, 4, 5]);
        assert_eq!(cfg.powers, vec![4]);
        assert_eq!(cfg.methods, vec![Method::Dms, Method::Gps]);
        assert_eq!(cfg.reference, ReferenceKind::Diffusion);
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(
            cfg.manifold,
            ManifoldKind::CircleWithOutliers {
                outliers: vec![[0.0, 3.0], [3.0, 0.0]]
            }
        );
    }

    #[test]
    fn sweep_defaults_to_euclidean() {
        let text = "manifold = circle\nn = 50\ntrials = 2\nP = 3\nk = 2\neps = .25\nmethods = GPS\nseed = 1\n";
        let cfg = RawConfig::parse(text).unwrap().experiment().unwrap();
        assert_eq!(cfg.powers, vec![2, 4, 8]);
        assert_eq!(cfg.reference, ReferenceKind::Euclidean);
    }

    #[test]
    fn reports_every_offending_key() {
        let text = "manifold = klein\na = 10\nn = ten\ntrials = 2\np = 1\nk = 2\neps = 1\nmethods =\nseed = 1\nbogus = 3\n";
        let err = RawConfig::parse(text).unwrap_err();
        assert_eq!(err.keys(), vec!["bogus"]);
        let text = text.replace("bogus = 3\n", "");
        let err = RawConfig::parse(&text).unwrap().experiment().unwrap_err();
        assert_eq!(err.keys(), vec!["b", "methods", "n"]);
    }

    #[test]
    fn rejects_conflicts() {
        let base = "manifold = circle\nn = 50\ntrials = 2\neps = 1\nmethods = GPS\nseed = 1\n";
        let keys = |extra: &str| {
            RawConfig::parse(&format!("{base}{extra}"))
                .unwrap()
                .experiment()
                .unwrap_err()
                .keys()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(keys("P = 3\np = 2\nk = 2\n"), ["p"]);
        assert_eq!(keys("P = 3\nkmin = 2\nkmax = 4\n"), ["kmax"]);
        assert_eq!(keys("p = 2\nk = 2\nkmin = 1\n"), ["k"]);
        assert_eq!(keys("p = 2\nkmin = 4\nkmax = 2\n"), ["kmin"]);
        assert_eq!(keys("P = 3\nk = 2\nreference = diffusion\n"), ["reference"]);
        assert_eq!(keys("p = 2\n"), ["k"]);
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        let err = RawConfig::parse("n = 1\nn = 2\njunk\n").unwrap_err();
        assert_eq!(err.keys(), vec!["line 3", "n"]);
    }

    #[test]
    fn points() {
        assert_eq!(parse_points("1:2,-3.5:0").unwrap(), vec![[1.0, 2.0], [-3.5, 0.0]]);
        assert!(parse_points("1,2").is_err());
    }
}
