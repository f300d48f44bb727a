use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
        })
    }
}

/// One comparison of an empirical or exact quantity against its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceRow {
    pub n: u64,
    pub label: String,
    pub empirical: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Outcome of checking a bound over a set of evidence rows.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCertificate {
    pub name: String,
    pub parameters: Vec<(String, f64)>,
    pub evidence: Vec<EvidenceRow>,
    pub verdict: Verdict,
}

impl BoundCertificate {
    /// Verdict is `Holds` iff every row holds.
    pub fn from_rows(name: impl Into<String>, parameters: Vec<(String, f64)>, evidence: Vec<EvidenceRow>) -> Self {
        let verdict = if evidence.iter().all(|r| r.holds) { Verdict::Holds } else { Verdict::Fails };
        BoundCertificate { name: name.into(), parameters, evidence, verdict }
    }

    pub fn parameter(&self, key: &str) -> Option<f64> {
        self.parameters.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}
