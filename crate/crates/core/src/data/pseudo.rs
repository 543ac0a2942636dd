//! Rule-based CE pseudo labels inferred from AU annotations.
//!
//! Rule file syntax, one rule per line (`#` starts a comment):
//!
//! ```text
//! REQ au6,au12 FORBID au4,au15 => 4
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{AuBits, Emotion, LabelSet, AU_COUNT, DEFAULT_AU_CODES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoRule {
    /// Unit indices (positions in the AU label vector) that must be on.
    pub required: Vec<usize>,
    /// Unit indices that must be off.
    pub forbidden: Vec<usize>,
    pub ce: Emotion,
}

impl PseudoRule {
    pub fn fires(&self, au: &AuBits) -> bool {
        self.required.iter().all(|&i| au[i]) && self.forbidden.iter().all(|&i| !au[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoRuleTable {
    codes: [u32; AU_COUNT],
    rules: Vec<PseudoRule>,
}

impl Default for PseudoRuleTable {
    /// FACS-motivated table: smile → happiness, brow-lowerer/inner-brow/lip
    /// corner depressor → sadness, raised brows with parted lips → surprise,
    /// lowered brows with tightened lids and lips → anger.
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("built-in rules parse")
    }
}

pub const DEFAULT_RULES: &str = "\
REQ au6,au12 FORBID au4,au15 => 4
REQ au1,au4,au15 FORBID au12 => 5
REQ au1,au2,au25 FORBID au4 => 6
REQ au4,au7,au23 FORBID au12 => 1
";

impl PseudoRuleTable {
    pub fn new(rules: Vec<PseudoRule>) -> Result<Self> {
        Self::with_codes(DEFAULT_AU_CODES, rules)
    }

    pub fn with_codes(codes: [u32; AU_COUNT], rules: Vec<PseudoRule>) -> Result<Self> {
        for (n, r) in rules.iter().enumerate() {
            if let Some(&i) = r.required.iter().chain(&r.forbidden).find(|&&i| i >= AU_COUNT) {
                return Err(Error::Validation(format!("rule {n}: unit index {i} out of range")));
            }
            if r.required.iter().any(|i| r.forbidden.contains(i)) {
                return Err(Error::Validation(format!(
                    "rule {n}: a unit is both required and forbidden"
                )));
            }
        }
        Ok(Self { codes, rules })
    }

    pub fn rules(&self) -> &[PseudoRule] {
        &self.rules
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_codes(text, DEFAULT_AU_CODES)
    }

    /// Parses rules naming units by FACS code (`au12`) against `codes`, the
    /// AU order of the label vector.
    pub fn parse_with_codes(text: &str, codes: [u32; AU_COUNT]) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rule = parse_rule(line, &codes).map_err(|message| Error::RuleParse {
                line: idx + 1,
                message,
            })?;
            rules.push(rule);
        }
        Ok(Self { codes, rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let names = |units: &[usize]| {
            units
                .iter()
                .map(|&i| format!("au{}", self.codes[i]))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        for r in &self.rules {
            let _ = write!(s, "REQ {}", names(&r.required));
            if !r.forbidden.is_empty() {
                let _ = write!(s, " FORBID {}", names(&r.forbidden));
            }
            let _ = writeln!(s, " => {}", r.ce.index());
        }
        s
    }
}

fn parse_units(list: &str, codes: &[u32; AU_COUNT]) -> std::result::Result<Vec<usize>, String> {
    list.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let code: u32 = tok
                .strip_prefix("au")
                .or_else(|| tok.strip_prefix("AU"))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| format!("bad unit `{tok}` (expected auN)"))?;
            codes
                .iter()
                .position(|&c| c == code)
                .ok_or_else(|| format!("AU{code} is not one of the configured units"))
        })
        .collect()
}

fn parse_rule(line: &str, codes: &[u32; AU_COUNT]) -> std::result::Result<PseudoRule, String> {
    let (lhs, rhs) = line.split_once("=>").ok_or("missing `=>`")?;
    let ce: usize = rhs
        .trim()
        .parse()
        .map_err(|_| format!("bad class `{}`", rhs.trim()))?;
    let ce = Emotion::from_index(ce).map_err(|e| e.to_string())?;

    let mut tokens = lhs.split_whitespace();
    if tokens.next() != Some("REQ") {
        return Err("rule must start with `REQ`".into());
    }
    let required = parse_units(tokens.next().ok_or("REQ needs a unit list")?, codes)?;
    let forbidden = match tokens.next() {
        None => Vec::new(),
        Some("FORBID") => parse_units(tokens.next().ok_or("FORBID needs a unit list")?, codes)?,
        Some(other) => return Err(format!("unexpected `{other}`")),
    };
    if let Some(extra) = tokens.next() {
        return Err(format!("unexpected `{extra}`"));
    }
    if required.iter().any(|i| forbidden.contains(i)) {
        return Err("a unit is both required and forbidden".into());
    }
    Ok(PseudoRule {
        required,
        forbidden,
        ce,
    })
}

/// The class of the firing rules if exactly one distinct class fires.
pub fn pseudo_infer(au: &AuBits, rules: &PseudoRuleTable) -> Option<Emotion> {
    let mut found: Option<Emotion> = None;
    for r in rules.rules.iter().filter(|r| r.fires(au)) {
        match found {
            None => found = Some(r.ce),
            Some(c) if c == r.ce => {}
            Some(_) => return None,
        }
    }
    found
}

/// Fills absent CE labels from present AU labels. Returns the number filled.
pub fn pseudo_apply<'a>(
    labels: impl IntoIterator<Item = &'a mut LabelSet>,
    rules: &PseudoRuleTable,
) -> usize {
    let mut filled = 0;
    for l in labels {
        if l.ce.is_some() {
            continue;
        }
        if let Some(ce) = l.au.as_ref().and_then(|au| pseudo_infer(au, rules)) {
            l.ce = Some(ce);
            filled += 1;
        }
    }
    filled
}
