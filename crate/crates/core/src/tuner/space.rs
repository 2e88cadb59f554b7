//! Search spaces: parameter specifications, their text format, sampling
//! and membership.
//!
//! ```text
//! # comments start with '#'
//! name "tvae-extensive"
//! max_trials 300
//! time_budget 20m          # or seconds; 0 = unbounded
//! max_steps 0              # 0 = unbounded
//! grace_steps 5
//! exhaust_grid true
//! param "learning_rate" qloguniform 1e-4 1e-2 1e-4
//! param "batch_size" choice 100 500 2000
//! param "k_neighbors" grid 2 20
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rand::Rng as _;

use crate::config::{Config, ParamValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Choice(Vec<ParamValue>),
    QLogUniform { lo: f64, hi: f64, q: f64 },
    GridInt { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

/// Tolerance for treating a float as an integer multiple of `q`.
const Q_TOL: f64 = 1e-9;

impl ParamSpec {
    pub fn choice(name: &str, values: Vec<ParamValue>) -> ParamSpec {
        ParamSpec { name: name.into(), kind: ParamKind::Choice(values) }
    }

    pub fn q_log_uniform(name: &str, lo: f64, hi: f64, q: f64) -> ParamSpec {
        ParamSpec { name: name.into(), kind: ParamKind::QLogUniform { lo, hi, q } }
    }

    pub fn grid(name: &str, lo: i64, hi: i64) -> ParamSpec {
        ParamSpec { name: name.into(), kind: ParamKind::GridInt { lo, hi } }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SearchSpace(format!("param `{}`: {m}", self.name)));
        match &self.kind {
            ParamKind::Choice(v) if v.is_empty() => bad("empty choice list".into()),
            ParamKind::QLogUniform { lo, hi, q } => {
                if !(lo.is_finite() && hi.is_finite() && q.is_finite()) {
                    bad("non-finite bound".into())
                } else if !(*lo > 0.0 && lo < hi) {
                    bad(format!("needs 0 < lo < hi, got {lo} and {hi}"))
                } else if *q <= 0.0 {
                    bad(format!("q = {q} must be positive"))
                } else if q_range(*lo, *hi, *q).is_none() {
                    bad(format!("no multiple of {q} lies in [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
            ParamKind::GridInt { lo, hi } if lo >= hi => bad(format!("needs lo < hi, got {lo} and {hi}")),
            _ => Ok(()),
        }
    }

    /// Draws one value.
    pub fn sample(&self, r: &mut crate::rng::Rng) -> ParamValue {
        match &self.kind {
            ParamKind::Choice(v) => v[r.gen_range(0..v.len())].clone(),
            ParamKind::GridInt { lo, hi } => ParamValue::Int(r.gen_range(*lo..=*hi)),
            ParamKind::QLogUniform { lo, hi, q } => {
                let (klo, khi) = q_range(*lo, *hi, *q).expect("validated");
                let u: f64 = r.gen();
                let x = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
                let k = ((x / q).round() as i64).clamp(klo, khi);
                ParamValue::Float(q_multiple(k, *q))
            }
        }
    }

    /// Whether `v` can be drawn from this spec.
    pub fn admits(&self, v: &ParamValue) -> bool {
        match &self.kind {
            ParamKind::Choice(values) => values.contains(v),
            ParamKind::GridInt { lo, hi } => matches!(v.as_i64(), Some(i) if (*lo..=*hi).contains(&i))
                && !matches!(v, ParamValue::Float(f) if f.fract() != 0.0),
            ParamKind::QLogUniform { lo, hi, q } => match v.as_f64() {
                Some(x) => {
                    let (klo, khi) = q_range(*lo, *hi, *q).expect("validated");
                    let k = x / q;
                    (k - k.round()).abs() < Q_TOL * k.abs().max(1.0)
                        && (klo..=khi).contains(&(k.round() as i64))
                }
                None => false,
            },
        }
    }

    /// The finite list of values, for choice and grid parameters.
    pub fn values(&self) -> Option<Vec<ParamValue>> {
        match &self.kind {
            ParamKind::Choice(v) => Some(v.clone()),
            ParamKind::GridInt { lo, hi } => Some((*lo..=*hi).map(ParamValue::Int).collect()),
            ParamKind::QLogUniform { .. } => None,
        }
    }
}

/// Indices of the first and last multiples of `q` in `[lo, hi]`.
pub fn q_range(lo: f64, hi: f64, q: f64) -> Option<(i64, i64)> {
    let klo = (lo / q - Q_TOL).ceil() as i64;
    let khi = (hi / q + Q_TOL).floor() as i64;
    (klo >= 1 && klo <= khi).then_some((klo, khi))
}

/// `k·q` rounded to 15 significant digits, so that `73 · 1e-4` is stored
/// as the double nearest to 0.0073.
pub fn q_multiple(k: i64, q: f64) -> f64 {
    format!("{:.14e}", k as f64 * q).parse().expect("formatted float")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub max_trials: usize,
    /// Seconds; 0 means unbounded.
    pub per_trial_time_budget_s: f64,
    /// 0 means unbounded.
    pub max_steps: usize,
    pub grace_steps: usize,
    /// Enumerate every combination instead of sampling when the space is
    /// finite and has at most `max_trials` points.
    pub exhaust_grid: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            name: String::new(),
            params: Vec::new(),
            max_trials: 1,
            per_trial_time_budget_s: 0.0,
            max_steps: 0,
            grace_steps: 5,
            exhaust_grid: true,
        }
    }
}

fn tokenize(line: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::from("\"");
            loop {
                match chars.next() {
                    Some('\\') => {
                        if let Some(e) = chars.next() {
                            s.push('\\');
                            s.push(e);
                        }
                    }
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => return Err(Error::SearchSpace(format!("unterminated string in `{line}`"))),
                }
            }
            s.push('"');
            out.push(s);
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '#' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            out.push(s);
        }
    }
    Ok(out)
}

fn unquote(tok: &str) -> String {
    match ParamValue::from_token(tok) {
        ParamValue::Text(s) => s,
        other => other.to_string(),
    }
}

fn num<T: std::str::FromStr>(tok: &str, what: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::SearchSpace(format!("line {line}: `{tok}` is not a valid {what}")))
}

/// Parses a duration: plain seconds or a human string such as `20m`.
pub fn parse_budget(tok: &str) -> Result<f64> {
    if let Ok(s) = tok.parse::<f64>() {
        if s >= 0.0 && s.is_finite() {
            return Ok(s);
        }
    }
    humantime::parse_duration(tok)
        .map(|d: Duration| d.as_secs_f64())
        .map_err(|e| Error::InvalidArgument(format!("budget `{tok}`: {e}")))
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for p in &self.params {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(Error::SearchSpace(format!("duplicate param `{}`", p.name)));
            }
        }
        if self.max_trials == 0 {
            return Err(Error::SearchSpace("max_trials must be at least 1".into()));
        }
        if !(self.per_trial_time_budget_s >= 0.0 && self.per_trial_time_budget_s.is_finite()) {
            return Err(Error::SearchSpace("time budget must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn parse(text: &str) -> Result<SearchSpace> {
        let mut s = SearchSpace::default();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let toks = tokenize(raw)?;
            let Some(head) = toks.first() else { continue };
            let arg = |k: usize| {
                toks.get(k)
                    .map(String::as_str)
                    .ok_or_else(|| Error::SearchSpace(format!("line {ln}: `{head}` needs more arguments")))
            };
            match head.as_str() {
                "name" => s.name = unquote(arg(1)?),
                "max_trials" => s.max_trials = num(arg(1)?, "count", ln)?,
                "time_budget" => s.per_trial_time_budget_s = parse_budget(arg(1)?)?,
                "max_steps" => s.max_steps = num(arg(1)?, "count", ln)?,
                "grace_steps" => s.grace_steps = num(arg(1)?, "count", ln)?,
                "exhaust_grid" => s.exhaust_grid = num(arg(1)?, "boolean", ln)?,
                "param" => {
                    let name = unquote(arg(1)?);
                    let kind = match arg(2)? {
                        "choice" => {
                            let v: Vec<ParamValue> = toks[3..].iter().map(|t| ParamValue::from_token(t)).collect();
                            ParamKind::Choice(v)
                        }
                        "qloguniform" => ParamKind::QLogUniform {
                            lo: num(arg(3)?, "number", ln)?,
                            hi: num(arg(4)?, "number", ln)?,
                            q: num(arg(5)?, "number", ln)?,
                        },
                        "grid" => ParamKind::GridInt {
                            lo: num(arg(3)?, "integer", ln)?,
                            hi: num(arg(4)?, "integer", ln)?,
                        },
                        other => {
                            return Err(Error::SearchSpace(format!("line {ln}: unknown param kind `{other}`")))
                        }
                    };
                    s.params.push(ParamSpec { name, kind });
                }
                other => return Err(Error::SearchSpace(format!("line {ln}: unknown directive `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SearchSpace> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SearchSpace::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            writeln!(out, "name {:?}", self.name).unwrap();
        }
        writeln!(out, "max_trials {}", self.max_trials).unwrap();
        writeln!(out, "time_budget {:?}", self.per_trial_time_budget_s).unwrap();
        writeln!(out, "max_steps {}", self.max_steps).unwrap();
        writeln!(out, "grace_steps {}", self.grace_steps).unwrap();
        writeln!(out, "exhaust_grid {}", self.exhaust_grid).unwrap();
        for p in &self.params {
            write!(out, "param {:?} ", p.name).unwrap();
            match &p.kind {
                ParamKind::Choice(v) => {
                    out.push_str("choice");
                    for x in v {
                        write!(out, " {}", x.to_token()).unwrap();
                    }
                }
                ParamKind::QLogUniform { lo, hi, q } => {
                    write!(out, "qloguniform {lo:?} {hi:?} {q:?}").unwrap();
                }
                ParamKind::GridInt { lo, hi } => write!(out, "grid {lo} {hi}").unwrap(),
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn sample_config(&self, r: &mut crate::rng::Rng) -> Config {
        self.params.iter().map(|p| (p.name.clone(), p.sample(r))).collect()
    }

    /// Checks that `config` sets exactly this space's parameters to
    /// admissible values.
    pub fn check_config(&self, config: &Config) -> Result<()> {
        for p in &self.params {
            match config.get(&p.name) {
                None => return Err(Error::SearchSpace(format!("config lacks `{}`", p.name))),
                Some(v) if !p.admits(v) => {
                    return Err(Error::SearchSpace(format!("`{}` = {v} is outside its range", p.name)))
                }
                _ => {}
            }
        }
        if let Some(k) = config.keys().find(|k| self.param(k).is_none()) {
            return Err(Error::SearchSpace(format!("config sets unknown `{k}`")));
        }
        Ok(())
    }

    /// Every combination of a finite space in lexicographic order, or
    /// `None` when a parameter is continuous or there are more than
    /// `limit` points.
    pub fn grid_points(&self, limit: usize) -> Option<Vec<Config>> {
        let lists: Vec<Vec<ParamValue>> = self.params.iter().map(ParamSpec::values).collect::<Option<_>>()?;
        let total = lists.iter().try_fold(1usize, |acc, l| acc.checked_mul(l.len()))?;
        if total > limit {
            return None;
        }
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut c = Config::new();
            for (p, l) in self.params.iter().zip(&lists).rev() {
                c.insert(p.name.clone(), l[idx % l.len()].clone());
                idx /= l.len();
            }
            out.push(c);
        }
        Some(out)
    }

    /// The configurations a tuning run tries, in trial order.
    pub fn trial_configs(&self, r: &mut crate::rng::Rng) -> Vec<Config> {
        if self.exhaust_grid {
            if let Some(points) = self.grid_points(self.max_trials) {
                return points;
            }
        }
        (0..self.max_trials).map(|_| self.sample_config(r)).collect()
    }
}

/// The search spaces shipped with the crate, by file stem.
pub const BUNDLED: [(&str, &str); 11] = [
    ("tvae-extensive", include_str!("../../spaces/tvae-extensive.space")),
    ("tvae-reduced", include_str!("../../spaces/tvae-reduced.space")),
    ("ctgan-extensive", include_str!("../../spaces/ctgan-extensive.space")),
    ("ctgan-reduced", include_str!("../../spaces/ctgan-reduced.space")),
    ("tabsyn-extensive", include_str!("../../spaces/tabsyn-extensive.space")),
    ("tabsyn-reduced", include_str!("../../spaces/tabsyn-reduced.space")),
    ("tabddpm-extensive", include_str!("../../spaces/tabddpm-extensive.space")),
    ("tabddpm-reduced", include_str!("../../spaces/tabddpm-reduced.space")),
    ("smote", include_str!("../../spaces/smote.space")),
    ("gmmtoy", include_str!("../../spaces/gmmtoy.space")),
    ("traincopy", include_str!("../../spaces/traincopy.space")),
];

/// A bundled space by name.
pub fn bundled(name: &str) -> Result<SearchSpace> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
            Error::SearchSpace(format!("no bundled space `{name}`; have {}", names.join(", ")))
        })
        .and_then(|(_, text)| SearchSpace::parse(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn text_round_trip() {
        let text = r#"
            name "demo"   # trailing comment
            max_trials 50
            time_budget 20m
            max_steps 10
            param "lr" qloguniform 1e-4 1e-2 1e-4
            param "enc" choice "CDF" PLE_CDF 3 2.5 true
            param "k" grid 2 20
        "#;
        let s = SearchSpace::parse(text).unwrap();
        assert_eq!(s.per_trial_time_budget_s, 1200.0);
        assert_eq!(s.params.len(), 3);
        assert_eq!(SearchSpace::parse(&s.to_text()).unwrap(), s);
        assert!(SearchSpace::parse("param \"a\" grid 3 3").is_err());
        assert!(SearchSpace::parse("param \"a\" choice").is_err());
        assert!(SearchSpace::parse("param \"a\" grid 1 2\nparam \"a\" grid 1 2").is_err());
        assert!(SearchSpace::parse("bogus 1").is_err());
    }

    #[test]
    fn q_samples_are_multiples_in_range() {
        let p = ParamSpec::q_log_uniform("lr", 1e-4, 1e-2, 1e-4);
        let mut r = rng::stream(0, "q");
        for _ in 0..2000 {
            let v = p.sample(&mut r);
            assert!(p.admits(&v), "{v}");
            let x = v.as_f64().unwrap();
            assert!((1e-4..=1e-2).contains(&x));
        }
        assert!(!p.admits(&ParamValue::Float(1.5e-4)));
        assert!(!p.admits(&ParamValue::Float(2e-2)));
    }

    #[test]
    fn singleton_choice() {
        let p = ParamSpec::choice("e", vec![ParamValue::Int(100)]);
        let mut r = rng::stream(0, "c");
        assert!((0..50).all(|_| p.sample(&mut r) == ParamValue::Int(100)));
    }

    #[test]
    fn grid_enumeration() {
        let s = SearchSpace {
            params: vec![ParamSpec::grid("k", 2, 20)],
            max_trials: 38,
            ..SearchSpace::default()
        };
        let pts = s.trial_configs(&mut rng::stream(0, "g"));
        assert_eq!(pts.len(), 19);
        assert_eq!(pts[0]["k"], ParamValue::Int(2));
        let two = SearchSpace {
            params: vec![ParamSpec::grid("a", 0, 1), ParamSpec::choice("b", vec!["x".into(), "y".into()])],
            max_trials: 3,
            ..SearchSpace::default()
        };
        assert!(two.grid_points(3).is_none());
        let pts = two.grid_points(4).unwrap();
        assert_eq!(pts[1]["a"], ParamValue::Int(0));
        assert_eq!(pts[1]["b"], ParamValue::from("y"));
    }

    #[test]
    fn bundled_spaces_parse() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert!(!s.params.is_empty() || name == "traincopy", "{name}");
        }
        let tvae = bundled("tvae-extensive").unwrap();
        assert_eq!(tvae.max_trials, 300);
        assert_eq!(
            tvae.param("learning_rate").unwrap().kind,
            ParamKind::QLogUniform { lo: 1e-4, hi: 1e-2, q: 1e-4 }
        );
        let ddpm = bundled("tabddpm-reduced").unwrap();
        assert_eq!(ddpm.param("num_timesteps").unwrap().values().unwrap(), vec![ParamValue::Int(1000)]);
        assert_eq!(bundled("smote").unwrap().trial_configs(&mut rng::stream(0, "s")).len(), 19);
    }

    #[test]
    fn budgets() {
        assert_eq!(parse_budget("90s").unwrap(), 90.0);
        assert_eq!(parse_budget("1.5").unwrap(), 1.5);
        assert!(parse_budget("soon").is_err());
    }
}
