//! Rule-based extraction of lesions, PI-RADS scores and sector-map locations
//! from structured radiology report text.
//!
//! A lesion statement starts at a lesion marker (`Lesion 2`, `Finding #1`)
//! and runs to the next marker or the end of its line. Indented lines that
//! directly follow a statement are treated as its continuation. Everything
//! else in the report is ignored.
//!
//! Inside a statement the PI-RADS score, size measurements and the marker are
//! removed, the remainder is split into clauses at punctuation, and each
//! clause is scanned for lexicon terms (longest match first). Unknown words
//! inside a clause that contains at least one location term are reported as
//! warnings.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Laterality {
    Left,
    Right,
    Midline,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ApPosition {
    Anterior,
    Posterior,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SiLevel {
    Base,
    Mid,
    Apex,
    Unspecified,
}

/// Prostate zone. Recorded for audit only; never used for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Zone {
    #[serde(rename = "PZ")]
    Pz,
    #[serde(rename = "TZ")]
    Tz,
    #[serde(rename = "CZ")]
    Cz,
    #[serde(rename = "AFS")]
    Afs,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationDescriptor {
    pub laterality: Laterality,
    pub ap: ApPosition,
    pub si: SiLevel,
    pub zone: Zone,
}

impl LocationDescriptor {
    pub const UNSPECIFIED: LocationDescriptor = LocationDescriptor {
        laterality: Laterality::Unspecified,
        ap: ApPosition::Unspecified,
        si: SiLevel::Unspecified,
        zone: Zone::Unspecified,
    };

    pub fn new(laterality: Laterality, ap: ApPosition, si: SiLevel) -> Self {
        Self {
            laterality,
            ap,
            si,
            zone: Zone::Unspecified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLesion {
    pub index: u32,
    pub pirads: u8,
    pub locations: Vec<LocationDescriptor>,
    pub raw_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based line number of the statement's lesion marker.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedReport {
    pub lesions: Vec<ReportLesion>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("report text is empty")]
    EmptyReport,
    #[error("minimum PI-RADS must be within 1..=5, got {0}")]
    InvalidMinPirads(u8),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single lexicon value on one location axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisValue {
    Laterality(Laterality),
    Ap(ApPosition),
    Si(SiLevel),
    Zone(Zone),
}

impl FromStr for AxisValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (axis, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected axis:value, got {s:?}"))?;
        let value = value.trim().to_ascii_lowercase();
        let parsed = match (axis.trim().to_ascii_lowercase().as_str(), value.as_str()) {
            ("laterality", "left") => AxisValue::Laterality(Laterality::Left),
            ("laterality", "right") => AxisValue::Laterality(Laterality::Right),
            ("laterality", "midline") => AxisValue::Laterality(Laterality::Midline),
            ("ap", "anterior") => AxisValue::Ap(ApPosition::Anterior),
            ("ap", "posterior") => AxisValue::Ap(ApPosition::Posterior),
            ("si", "base") => AxisValue::Si(SiLevel::Base),
            ("si", "mid") => AxisValue::Si(SiLevel::Mid),
            ("si", "apex") => AxisValue::Si(SiLevel::Apex),
            ("zone", "pz") => AxisValue::Zone(Zone::Pz),
            ("zone", "tz") => AxisValue::Zone(Zone::Tz),
            ("zone", "cz") => AxisValue::Zone(Zone::Cz),
            ("zone", "afs") => AxisValue::Zone(Zone::Afs),
            _ => return Err(format!("unknown axis value {s:?}")),
        };
        Ok(parsed)
    }
}

/// Term to axis-value mapping loaded from the `term = axis:value` format.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    terms: HashMap<String, Vec<AxisValue>>,
    max_words: usize,
}

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.txt");

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| BUILTIN_LEXICON.parse().expect("builtin lexicon is valid"))
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN_LEXICON
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ParseError> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn lookup(&self, term: &str) -> Option<&[AxisValue]> {
        self.terms.get(term).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn insert(&mut self, term: &str, value: AxisValue) {
        let term = term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        self.max_words = self.max_words.max(term.split(' ').count());
        let values = self.terms.entry(term).or_default();
        if !values.contains(&value) {
            values.push(value);
        }
    }
}

impl FromStr for Lexicon {
    type Err = ParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lex = Lexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ParseError::Lexicon { line: i + 1, message };
            let (term, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `term = axis:value`".into()))?;
            if term.trim().is_empty() {
                return Err(err("empty term".into()));
            }
            lex.insert(term, value.parse().map_err(err)?);
        }
        Ok(lex)
    }
}

/// Words that may appear inside a location phrase without carrying location
/// meaning of their own.
const LOCATION_STOPWORDS: &[&str] = &[
    "a", "an", "and", "area", "aspect", "aspects", "at", "both", "extending", "extends", "focal",
    "focus", "from", "gland", "in", "into", "involving", "is", "lesion", "level", "lobe", "lobes",
    "located", "location", "of", "on", "or", "part", "portion", "prostate", "region", "side",
    "sided", "sides", "segment", "segments", "sector", "sectors", "the", "through", "to", "toward",
    "towards", "with", "within", "zone", "zones",
];

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:lesion|finding)\s*(?:#|no\.|number)?\s*(\d+)\b").unwrap()
    })
}

fn pirads_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\bpi[-\s]?rads(?:\s*v\s*2(?:\.1)?)?\s*(?:(?:assessment\s+)?(?:category|score)\s*)?[:=-]?\s*([1-5])\b",
        )
        .unwrap()
    })
}

fn size_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\d+(?:\.\d+)?(?:\s*[x×]\s*\d+(?:\.\d+)?)*\s*(?:mm|cm)\b").unwrap()
    })
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[a-z][a-z0-9]*(?:-[a-z0-9]+)*").unwrap())
}

struct Statement {
    line: usize,
    text: String,
}

/// Parser bound to a lexicon.
#[derive(Debug, Clone, Copy)]
pub struct ReportParser<'a> {
    lexicon: &'a Lexicon,
}

impl Default for ReportParser<'static> {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

impl<'a> ReportParser<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn parse(&self, text: &str) -> Result<ParsedReport, ParseError> {
        if text.trim().is_empty() {
            return Err(ParseError::EmptyReport);
        }
        let mut report = ParsedReport::default();
        let mut last_index = 0u32;
        for stmt in split_statements(text) {
            if let Some(lesion) = self.parse_statement(&stmt, last_index, &mut report.warnings) {
                last_index = lesion.index;
                report.lesions.push(lesion);
            }
        }
        Ok(report)
    }

    fn parse_statement(
        &self,
        stmt: &Statement,
        last_index: u32,
        warnings: &mut Vec<ParseWarning>,
    ) -> Option<ReportLesion> {
        let mut warn = |reason: String| {
            warnings.push(ParseWarning {
                line: stmt.line,
                reason,
            })
        };
        let marker = marker_re().captures(&stmt.text)?;
        let index = match marker[1].parse::<u32>() {
            Ok(i) if i > last_index => i,
            _ => {
                warn(format!("lesion index {} is not increasing; statement skipped", &marker[1]));
                return None;
            }
        };
        let body = &stmt.text[marker.get(0).unwrap().end()..];

        let scores: Vec<u8> = pirads_re()
            .captures_iter(body)
            .map(|c| c[1].parse().unwrap())
            .collect();
        let Some(&pirads) = scores.first() else {
            warn(format!("lesion {index} has no PI-RADS score; statement skipped"));
            return None;
        };
        if scores.iter().any(|&s| s != pirads) {
            warn(format!("lesion {index} has conflicting PI-RADS scores; using {pirads}"));
        }

        let stripped = pirads_re().replace_all(body, ",");
        let stripped = size_re().replace_all(&stripped, ",").to_lowercase();

        let mut lateralities = BTreeSet::new();
        let mut aps = BTreeSet::new();
        let mut sis = BTreeSet::new();
        let mut zones = BTreeSet::new();
        let mut unknown: Vec<String> = Vec::new();
        for clause in stripped.split([',', ';', ':', '.', '(', ')', '\n']) {
            let tokens = self.tokenize(clause);
            let mut hits = Vec::new();
            let mut misses = Vec::new();
            let mut i = 0;
            'scan: while i < tokens.len() {
                for len in (1..=self.lexicon.max_words.min(tokens.len() - i)).rev() {
                    let phrase = tokens[i..i + len].join(" ");
                    if let Some(values) = self.lexicon.lookup(&phrase) {
                        hits.extend_from_slice(values);
                        i += len;
                        continue 'scan;
                    }
                }
                misses.push(tokens[i].clone());
                i += 1;
            }
            if hits.is_empty() {
                continue;
            }
            for value in hits {
                match value {
                    AxisValue::Laterality(v) => lateralities.insert(v),
                    AxisValue::Ap(v) => aps.insert(v),
                    AxisValue::Si(v) => sis.insert(v),
                    AxisValue::Zone(v) => zones.insert(v),
                };
            }
            for word in misses {
                if !LOCATION_STOPWORDS.contains(&word.as_str()) && !unknown.contains(&word) {
                    unknown.push(word);
                }
            }
        }
        for word in unknown {
            warn(format!("lesion {index}: unrecognized location word {word:?} ignored"));
        }
        let locations = if lateralities.is_empty() && aps.is_empty() && sis.is_empty() && zones.is_empty() {
            warn(format!("lesion {index} has no recognizable location"));
            vec![LocationDescriptor::UNSPECIFIED]
        } else {
            descriptor_product(&lateralities, &aps, &sis, &zones)
        };

        Some(ReportLesion {
            index,
            pirads,
            locations,
            raw_span: stmt.text.trim().to_string(),
        })
    }

    /// Lowercase words; hyphenated words not present in the lexicon are split
    /// into their parts.
    fn tokenize(&self, clause: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for m in word_re().find_iter(clause) {
            let word = m.as_str();
            if word.contains('-') && self.lexicon.lookup(word).is_none() {
                tokens.extend(
                    word.split('-')
                        .filter(|p| p.starts_with(|c: char| c.is_ascii_alphabetic()))
                        .map(str::to_string),
                );
            } else {
                tokens.push(word.to_string());
            }
        }
        tokens
    }
}

fn descriptor_product(
    lateralities: &BTreeSet<Laterality>,
    aps: &BTreeSet<ApPosition>,
    sis: &BTreeSet<SiLevel>,
    zones: &BTreeSet<Zone>,
) -> Vec<LocationDescriptor> {
    fn or_unspecified<T: Copy>(set: &BTreeSet<T>, unspecified: T) -> Vec<T> {
        if set.is_empty() {
            vec![unspecified]
        } else {
            set.iter().copied().collect()
        }
    }
    let mut out = Vec::new();
    for &laterality in &or_unspecified(lateralities, Laterality::Unspecified) {
        for &ap in &or_unspecified(aps, ApPosition::Unspecified) {
            for &si in &or_unspecified(sis, SiLevel::Unspecified) {
                for &zone in &or_unspecified(zones, Zone::Unspecified) {
                    out.push(LocationDescriptor {
                        laterality,
                        ap,
                        si,
                        zone,
                    });
                }
            }
        }
    }
    out
}

fn split_statements(text: &str) -> Vec<Statement> {
    let mut out = Vec::new();
    let mut current: Option<Statement> = None;
    for (i, line) in text.lines().enumerate() {
        let starts: Vec<usize> = marker_re().find_iter(line).map(|m| m.start()).collect();
        if starts.is_empty() {
            let continuation = line.starts_with([' ', '\t']) && !line.trim().is_empty();
            match current.as_mut() {
                Some(stmt) if continuation => {
                    stmt.text.push(' ');
                    stmt.text.push_str(line.trim());
                }
                _ => out.extend(current.take()),
            }
            continue;
        }
        out.extend(current.take());
        for (k, &start) in starts.iter().enumerate() {
            let end = starts.get(k + 1).copied().unwrap_or(line.len());
            let stmt = Statement {
                line: i + 1,
                text: line[start..end].trim().to_string(),
            };
            if k + 1 == starts.len() {
                current = Some(stmt);
            } else {
                out.push(stmt);
            }
        }
    }
    out.extend(current);
    out
}

/// Parses a report with the built-in lexicon.
pub fn parse_report(text: &str) -> Result<ParsedReport, ParseError> {
    ReportParser::default().parse(text)
}

/// Order-preserving filter keeping lesions with `pirads >= min_pirads`.
pub fn significant_lesions(report: &ParsedReport, min_pirads: u8) -> Result<Vec<ReportLesion>, ParseError> {
    if !(1..=5).contains(&min_pirads) {
        return Err(ParseError::InvalidMinPirads(min_pirads));
    }
    Ok(report
        .lesions
        .iter()
        .filter(|l| l.pirads >= min_pirads)
        .cloned()
        .collect())
}

pub const DEFAULT_MIN_PIRADS: u8 = 3;

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
            Laterality::Midline => "midline",
            Laterality::Unspecified => "",
        })
    }
}

impl fmt::Display for ApPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApPosition::Anterior => "anterior",
            ApPosition::Posterior => "posterior",
            ApPosition::Unspecified => "",
        })
    }
}

impl fmt::Display for SiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SiLevel::Base => "base",
            SiLevel::Mid => "mid",
            SiLevel::Apex => "apex",
            SiLevel::Unspecified => "",
        })
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Pz => "peripheral zone",
            Zone::Tz => "transition zone",
            Zone::Cz => "central zone",
            Zone::Afs => "anterior fibromuscular stroma",
            Zone::Unspecified => "",
        })
    }
}
