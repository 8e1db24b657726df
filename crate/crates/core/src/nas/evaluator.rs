use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::cost::Arch;
use crate::error::{Error, Result};

/// Utility of a trained configuration, in `[0, 1]`. Must be deterministic per
/// configuration.
pub trait UtilityEvaluator {
    fn evaluate(&mut self, a: Arch) -> Result<f64>;
}

fn check_utility(a: Arch, u: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&u) {
        Ok(u)
    } else {
        Err(Error::Evaluator(format!("utility {u} for {a} is outside [0, 1]")))
    }
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    h: usize,
    r: usize,
    s: usize,
    utility: f64,
}

/// Precomputed utilities keyed by configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableEvaluator {
    table: HashMap<Arch, f64>,
}

impl TableEvaluator {
    pub fn new(entries: impl IntoIterator<Item = (Arch, f64)>) -> Result<Self> {
        let mut table = HashMap::new();
        for (a, u) in entries {
            check_utility(a, u)?;
            if table.insert(a, u).is_some() {
                return Err(Error::Format(format!("duplicate utility entry for {a}")));
            }
        }
        Ok(TableEvaluator { table })
    }

    /// Reads a CSV table with header `h,r,s,utility`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = csv::Reader::from_reader(file)
            .deserialize::<TableRow>()
            .map(|row| row.map(|t| (Arch::new(t.h, t.r, t.s), t.utility)).map_err(fmt))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(fmt)?;
        let mut rows: Vec<_> = self.table.iter().collect();
        rows.sort_by_key(|(a, _)| (a.s, a.h, a.r));
        for (a, &utility) in rows {
            w.serialize(TableRow { h: a.h, r: a.r, s: a.s, utility }).map_err(fmt)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn configs(&self) -> impl Iterator<Item = Arch> + '_ {
        self.table.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl UtilityEvaluator for TableEvaluator {
    fn evaluate(&mut self, a: Arch) -> Result<f64> {
        self.table
            .get(&a)
            .copied()
            .ok_or_else(|| Error::Evaluator(format!("no utility entry for {a}")))
    }
}

/// Runs `program args.. --h H --r R --s S` and parses one decimal from stdout.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandEvaluator {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl CommandEvaluator {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        CommandEvaluator { program: program.into(), args }
    }
}

impl UtilityEvaluator for CommandEvaluator {
    fn evaluate(&mut self, a: Arch) -> Result<f64> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .args(["--h", &a.h.to_string(), "--r", &a.r.to_string(), "--s", &a.s.to_string()])
            .output()
            .map_err(|e| Error::Evaluator(format!("cannot run {}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::Evaluator(format!(
                "{} failed for {a} ({}): {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let u: f64 = text
            .trim()
            .parse()
            .map_err(|_| Error::Evaluator(format!("{} printed {:?} for {a}, expected a number", self.program.display(), text.trim())))?;
        check_utility(a, u)
    }
}

/// Analytic utility, for tests and what-if studies.
pub struct FnEvaluator<F>(pub F);

impl<F: FnMut(Arch) -> f64> UtilityEvaluator for FnEvaluator<F> {
    fn evaluate(&mut self, a: Arch) -> Result<f64> {
        check_utility(a, (self.0)(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookup_and_csv_roundtrip() {
        let t = TableEvaluator::new([(Arch::new(1, 4, 1), 0.5), (Arch::new(2, 4, 1), 0.75)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        t.write_csv(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("h,r,s,utility\n"));
        let mut back = TableEvaluator::from_csv(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.evaluate(Arch::new(2, 4, 1)).unwrap(), 0.75);
        assert!(matches!(back.evaluate(Arch::new(4, 4, 1)), Err(Error::Evaluator(_))));
    }

    #[test]
    fn table_rejects_bad_rows() {
        assert!(TableEvaluator::new([(Arch::new(1, 4, 1), 1.5)]).is_err());
        assert!(TableEvaluator::new([(Arch::new(1, 4, 1), 0.5), (Arch::new(1, 4, 1), 0.6)]).is_err());
    }

    #[test]
    fn command_evaluator_parses_stdout() {
        let mut e = CommandEvaluator::new("sh", vec!["-c".into(), "echo 0.625".into(), "sh".into()]);
        assert_eq!(e.evaluate(Arch::new(1, 4, 1)).unwrap(), 0.625);
        let mut bad = CommandEvaluator::new("sh", vec!["-c".into(), "exit 3".into(), "sh".into()]);
        assert!(matches!(bad.evaluate(Arch::new(1, 4, 1)), Err(Error::Evaluator(_))));
        let mut junk = CommandEvaluator::new("sh", vec!["-c".into(), "echo high".into(), "sh".into()]);
        assert!(junk.evaluate(Arch::new(1, 4, 1)).is_err());
    }

    #[test]
    fn command_evaluator_receives_the_config() {
        // echoes r / 100 back, so the flags must arrive in order
        let script = r#"echo "0.$4""#;
        let mut e = CommandEvaluator::new("sh", vec!["-c".into(), script.into(), "sh".into()]);
        assert_eq!(e.evaluate(Arch::new(1, 42, 1)).unwrap(), 0.42);
    }

    #[test]
    fn fn_evaluator_checks_range() {
        let mut e = FnEvaluator(|a: Arch| a.r as f64 / 10.0);
        assert_eq!(e.evaluate(Arch::new(1, 5, 1)).unwrap(), 0.5);
        assert!(e.evaluate(Arch::new(1, 50, 1)).is_err());
    }
}
