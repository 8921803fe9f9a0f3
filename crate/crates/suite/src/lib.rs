//! Runner for the acceptance suite: each check yields a verdict, printed as
//! one PASS/FAIL line; the tally becomes the process exit code.

use std::panic::{catch_unwind, UnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub summary: String,
    /// Extra detail lines printed under the verdict.
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn new(pass: bool, summary: impl Into<String>) -> Self {
        Verdict {
            pass,
            summary: summary.into(),
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub verdict: Verdict,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} {} {}: {} [{:.1} s]",
            if self.verdict.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.verdict.summary,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Debug, Default)]
pub struct Suite {
    outcomes: Vec<Outcome>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one check; a panic counts as a failure carrying its message.
    pub fn run(&mut self, id: &str, title: &str, check: impl FnOnce() -> Verdict + UnwindSafe) -> &Outcome {
        let start = Instant::now();
        let verdict = catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let outcome = Outcome {
            id: id.into(),
            title: title.into(),
            verdict,
            elapsed: start.elapsed(),
        };
        println!("{}", outcome.line());
        for n in &outcome.verdict.notes {
            println!("       {n}");
        }
        self.outcomes.push(outcome);
        self.outcomes.last().expect("just pushed")
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.verdict.pass).count()
    }

    pub fn finish(self) -> ExitCode {
        println!("{}/{} criteria passed", self.passed(), self.outcomes.len());
        if self.passed() == self.outcomes.len() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_failures() {
        let mut s = Suite::new();
        s.run("1", "ok", || Verdict::new(true, "fine"));
        let o = s.run("2", "boom", || panic!("bad input"));
        assert!(!o.verdict.pass);
        assert!(o.verdict.summary.contains("bad input"));
        assert_eq!(s.passed(), 1);
        assert_eq!(s.outcomes().len(), 2);
    }

    #[test]
    fn lines_carry_the_verdict() {
        let o = Outcome {
            id: "3".into(),
            title: "x".into(),
            verdict: Verdict::new(false, "nope"),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(o.line(), "FAIL 3 x: nope [1.5 s]");
    }
}
