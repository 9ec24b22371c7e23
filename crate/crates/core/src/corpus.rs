//! Patent record ingestion and sector-year aggregation.
//!
//! Records arrive as one JSON object per line. Parsing collects per-line
//! problems instead of stopping at the first one, except for duplicate
//! patent ids which abort the whole parse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Sector = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub patent_id: String,
    pub app_year: i32,
    /// First entry is the primary class.
    pub classes: Vec<Sector>,
    pub abstract_text: String,
    pub cited_ids: Vec<String>,
    pub inventor_ids: Vec<String>,
    pub applicant_ids: Vec<String>,
}

impl PatentRecord {
    pub fn primary_class(&self) -> &str {
        &self.classes[0]
    }

    /// Serialize back to the line format accepted by [`parse_records`].
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "id": self.patent_id,
            "year": self.app_year,
            "classes": self.classes,
            "abstract": self.abstract_text,
            "cited": self.cited_ids,
            "inventors": self.inventor_ids,
            "applicants": self.applicant_ids,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Primary class only.
    #[default]
    Univocal,
    /// Every listed class counts the patent once.
    Multiple,
    /// Each listed class receives 1/|classes|.
    Fractional,
}

impl AssignmentMode {
    /// Sector weights for one patent. Fractional weights sum to one.
    pub fn weights<'a>(&self, rec: &'a PatentRecord) -> Vec<(&'a str, f64)> {
        match self {
            AssignmentMode::Univocal => vec![(rec.primary_class(), 1.0)],
            AssignmentMode::Multiple => rec.classes.iter().map(|c| (c.as_str(), 1.0)).collect(),
            AssignmentMode::Fractional => {
                let w = 1.0 / rec.classes.len() as f64;
                rec.classes.iter().map(|c| (c.as_str(), w)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: Vec<PatentRecord>,
    pub errors: Vec<RecordError>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl Default for YearRange {
    fn default() -> Self {
        YearRange {
            first: 1976,
            last: 2021,
        }
    }
}

fn string_list(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    required: bool,
) -> Result<Vec<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) if !required => Ok(Vec::new()),
        None | Some(Value::Null) => Err(format!("missing required field `{key}`")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(format!("field `{key}` must contain strings")),
            })
            .collect(),
        Some(_) => Err(format!("field `{key}` must be an array")),
    }
}

fn parse_line(
    line: &str,
    years: YearRange,
) -> Result<(PatentRecord, Vec<String>), (Option<String>, String)> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| (None, format!("malformed JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or((None, "expected a JSON object".to_string()))?;

    let field_err = |f: &str, m: String| (Some(f.to_string()), m);

    let patent_id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => {
            return Err(field_err(
                "id",
                "field `id` must be a non-empty string".into(),
            ))
        }
        None => return Err(field_err("id", "missing required field `id`".into())),
    };
    let app_year = match obj.get("year") {
        Some(v) => v
            .as_i64()
            .ok_or_else(|| field_err("year", "field `year` must be an integer".into()))?
            as i32,
        None => return Err(field_err("year", "missing required field `year`".into())),
    };
    if app_year < years.first || app_year > years.last {
        return Err(field_err(
            "year",
            format!("year {app_year} outside {}..={}", years.first, years.last),
        ));
    }
    let mut classes = string_list(obj, "classes", true).map_err(|m| field_err("classes", m))?;
    let mut seen = BTreeSet::new();
    classes.retain(|c| seen.insert(c.clone()));
    if classes.is_empty() {
        return Err(field_err(
            "classes",
            "field `classes` must be non-empty".into(),
        ));
    }
    let abstract_text = match obj.get("abstract") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(field_err(
                "abstract",
                "field `abstract` must be a string".into(),
            ))
        }
        None => {
            return Err(field_err(
                "abstract",
                "missing required field `abstract`".into(),
            ))
        }
    };
    let mut cited_ids = string_list(obj, "cited", false).map_err(|m| field_err("cited", m))?;
    let inventor_ids =
        string_list(obj, "inventors", false).map_err(|m| field_err("inventors", m))?;
    let applicant_ids =
        string_list(obj, "applicants", false).map_err(|m| field_err("applicants", m))?;

    let mut warnings = Vec::new();
    let before = cited_ids.len();
    cited_ids.retain(|c| c != &patent_id);
    if cited_ids.len() != before {
        warnings.push(format!(
            "patent {patent_id} cites itself; self-citation dropped"
        ));
    }

    Ok((
        PatentRecord {
            patent_id,
            app_year,
            classes,
            abstract_text,
            cited_ids,
            inventor_ids,
            applicant_ids,
        },
        warnings,
    ))
}

/// Parse a line-delimited record stream. Line numbers are 1-based; blank
/// lines are skipped.
pub fn parse_records<R: BufRead>(reader: R, years: YearRange) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, years) {
            Ok((rec, warnings)) => {
                if let Some(&first) = first_line.get(&rec.patent_id) {
                    return Err(Error::DuplicateId {
                        id: rec.patent_id,
                        first,
                        second: line_no,
                    });
                }
                first_line.insert(rec.patent_id.clone(), line_no);
                report
                    .warnings
                    .extend(warnings.into_iter().map(|w| format!("line {line_no}: {w}")));
                report.records.push(rec);
            }
            Err((field, message)) => report.errors.push(RecordError {
                line: line_no,
                field,
                message,
            }),
        }
    }
    Ok(report)
}

pub fn write_records<W: Write>(mut out: W, records: &[PatentRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorYearCell {
    pub sector: Sector,
    pub year: i32,
    pub count: f64,
    pub bwd_cites: f64,
    pub fwd_cites: f64,
    /// Mean inventors per patent in the cell (0 for empty cells).
    pub inventors: f64,
    /// Weighted sum of inventor counts; `inventors * count` up to rounding.
    pub inventors_sum: f64,
    pub applicants: f64,
    pub collaborations: f64,
    pub class_span: f64,
}

impl SectorYearCell {
    fn empty(sector: &str, year: i32) -> Self {
        SectorYearCell {
            sector: sector.to_string(),
            year,
            count: 0.0,
            bwd_cites: 0.0,
            fwd_cites: 0.0,
            inventors: 0.0,
            inventors_sum: 0.0,
            applicants: 0.0,
            collaborations: 0.0,
            class_span: 0.0,
        }
    }
}

/// Balanced sector-year table: every sector appears in every year.
#[derive(Debug, Clone)]
pub struct CellTable {
    pub sectors: Vec<Sector>,
    pub years: Vec<i32>,
    /// Row-major by sector, then year.
    pub cells: Vec<SectorYearCell>,
}

impl CellTable {
    pub fn get(&self, sector_idx: usize, year_idx: usize) -> &SectorYearCell {
        &self.cells[sector_idx * self.years.len() + year_idx]
    }

    /// One field for all sectors in one year, in sector order.
    pub fn year_vector(&self, year_idx: usize, field: impl Fn(&SectorYearCell) -> f64) -> Vec<f64> {
        (0..self.sectors.len())
            .map(|s| field(self.get(s, year_idx)))
            .collect()
    }

    pub const CSV_HEADER: &'static str =
        "sector,year,count,bwd,fwd,inventors,applicants,collab,class_span";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.sector,
                c.year,
                c.count,
                c.bwd_cites,
                c.fwd_cites,
                c.inventors,
                c.applicants,
                c.collaborations,
                c.class_span
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut cells = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::input(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                row.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::input(format!("bad numeric cell in column {i}")))
            };
            let count = num(2)?;
            let inventors = num(5)?;
            cells.push(SectorYearCell {
                sector: row.get(0).unwrap_or_default().to_string(),
                year: num(1)? as i32,
                count,
                bwd_cites: num(3)?,
                fwd_cites: num(4)?,
                inventors,
                inventors_sum: inventors * count,
                applicants: num(6)?,
                collaborations: num(7)?,
                class_span: num(8)?,
            });
        }
        let sectors: Vec<Sector> = cells
            .iter()
            .map(|c| c.sector.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let years: Vec<i32> = cells
            .iter()
            .map(|c| c.year)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if sectors.len() * years.len() != cells.len() {
            return Err(Error::input(
                "cell table is not a balanced sector-year grid",
            ));
        }
        cells.sort_by(|a, b| a.sector.cmp(&b.sector).then(a.year.cmp(&b.year)));
        Ok(CellTable {
            sectors,
            years,
            cells,
        })
    }
}

/// In-corpus forward citation count per patent id.
pub fn forward_citations(records: &[PatentRecord]) -> HashMap<&str, usize> {
    let ids: HashMap<&str, ()> = records.iter().map(|r| (r.patent_id.as_str(), ())).collect();
    let mut fwd: HashMap<&str, usize> = HashMap::new();
    for r in records {
        for c in &r.cited_ids {
            if let Some((k, _)) = ids.get_key_value(c.as_str()) {
                *fwd.entry(k).or_default() += 1;
            }
        }
    }
    fwd
}

fn sorted_sectors(records: &[PatentRecord]) -> Vec<Sector> {
    records
        .iter()
        .flat_map(|r| r.classes.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn year_span(records: &[PatentRecord]) -> Vec<i32> {
    match (
        records.iter().map(|r| r.app_year).min(),
        records.iter().map(|r| r.app_year).max(),
    ) {
        (Some(a), Some(b)) => (a..=b).collect(),
        _ => Vec::new(),
    }
}

/// Aggregate records into a balanced sector-year table under `mode`.
///
/// The sector set is every class seen anywhere in the corpus, so Univocal
/// tables keep secondary-only sectors as zero rows.
pub fn aggregate(records: &[PatentRecord], mode: AssignmentMode) -> CellTable {
    let sectors = sorted_sectors(records);
    let years = year_span(records);
    aggregate_on(records, mode, &sectors, &years)
}

pub fn aggregate_on(
    records: &[PatentRecord],
    mode: AssignmentMode,
    sectors: &[Sector],
    years: &[i32],
) -> CellTable {
    let fwd = forward_citations(records);
    let sector_idx: HashMap<&str, usize> = sectors
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let year_idx: HashMap<i32, usize> = years.iter().enumerate().map(|(i, y)| (*y, i)).collect();
    let ny = years.len();

    let mut cells: Vec<SectorYearCell> = sectors
        .iter()
        .flat_map(|s| years.iter().map(move |y| SectorYearCell::empty(s, *y)))
        .collect();
    let mut applicants: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); cells.len()];

    // Distinct classes per (applicant, year) over all of that applicant's patents.
    let mut applicant_classes: HashMap<(&str, i32), BTreeSet<&str>> = HashMap::new();
    for r in records {
        for a in &r.applicant_ids {
            applicant_classes
                .entry((a.as_str(), r.app_year))
                .or_default()
                .extend(r.classes.iter().map(|c| c.as_str()));
        }
    }

    for r in records {
        let Some(&yi) = year_idx.get(&r.app_year) else {
            continue;
        };
        let distinct_applicants: BTreeSet<&str> =
            r.applicant_ids.iter().map(|s| s.as_str()).collect();
        let fwd_r = fwd.get(r.patent_id.as_str()).copied().unwrap_or(0) as f64;
        for (sector, w) in mode.weights(r) {
            let Some(&si) = sector_idx.get(sector) else {
                continue;
            };
            let k = si * ny + yi;
            let c = &mut cells[k];
            c.count += w;
            c.bwd_cites += w * r.cited_ids.len() as f64;
            c.fwd_cites += w * fwd_r;
            c.inventors_sum += w * r.inventor_ids.len() as f64;
            if distinct_applicants.len() >= 2 {
                c.collaborations += w;
            }
            applicants[k].extend(distinct_applicants.iter().copied());
        }
    }

    for (k, c) in cells.iter_mut().enumerate() {
        if c.count > 0.0 {
            c.inventors = c.inventors_sum / c.count;
        }
        c.applicants = applicants[k].len() as f64;
        if !applicants[k].is_empty() {
            let total: usize = applicants[k]
                .iter()
                .map(|a| applicant_classes.get(&(*a, c.year)).map_or(0, |s| s.len()))
                .sum();
            c.class_span = total as f64 / applicants[k].len() as f64;
        }
    }
    CellTable {
        sectors: sectors.to_vec(),
        years: years.to_vec(),
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationFlow {
    pub from_sector: Sector,
    pub to_sector: Sector,
    pub year: i32,
    pub count: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    pub flows: Vec<CitationFlow>,
    pub resolved: usize,
    pub unresolved: usize,
    pub warnings: Vec<String>,
}

impl FlowTable {
    pub const CSV_HEADER: &'static str = "from,to,year,count";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for f in &self.flows {
            writeln!(
                out,
                "{},{},{},{}",
                f.from_sector, f.to_sector, f.year, f.count
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut flows = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::input(e.to_string()))?;
            let bad = || Error::input("bad flow row");
            flows.push(CitationFlow {
                from_sector: row.get(0).ok_or_else(bad)?.to_string(),
                to_sector: row.get(1).ok_or_else(bad)?.to_string(),
                year: row.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
                count: row.get(3).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            });
        }
        Ok(FlowTable {
            flows,
            ..Default::default()
        })
    }
}

/// Tally sector-to-sector citations, keyed by the citing patent's year.
/// Self-sector flows are kept here; weight construction drops them.
pub fn citation_flows(records: &[PatentRecord], mode: AssignmentMode) -> FlowTable {
    let by_id: HashMap<&str, &PatentRecord> =
        records.iter().map(|r| (r.patent_id.as_str(), r)).collect();
    let mut tally: BTreeMap<(i32, &str, &str), f64> = BTreeMap::new();
    let mut table = FlowTable::default();
    for r in records {
        let citing = mode.weights(r);
        for cid in &r.cited_ids {
            let Some(cited) = by_id.get(cid.as_str()) else {
                table.unresolved += 1;
                continue;
            };
            table.resolved += 1;
            for (from, wf) in &citing {
                for (to, wt) in mode.weights(cited) {
                    *tally.entry((r.app_year, from, to)).or_default() += wf * wt;
                }
            }
        }
    }
    let total = table.resolved + table.unresolved;
    if total > 0 && table.unresolved * 2 > total {
        table.warnings.push(format!(
            "{} of {} cited ids are not in the corpus; the corpus may be truncated",
            table.unresolved, total
        ));
    }
    table.flows = tally
        .into_iter()
        .map(|((year, from, to), count)| CitationFlow {
            from_sector: from.to_string(),
            to_sector: to.to_string(),
            year,
            count,
        })
        .collect();
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, year: i32, classes: &[&str], cited: &[&str]) -> PatentRecord {
        PatentRecord {
            patent_id: id.into(),
            app_year: year,
            classes: classes.iter().map(|s| s.to_string()).collect(),
            abstract_text: String::new(),
            cited_ids: cited.iter().map(|s| s.to_string()).collect(),
            inventor_ids: vec!["i1".into()],
            applicant_ids: vec!["a1".into()],
        }
    }

    fn cell<'a>(t: &'a CellTable, sector: &str, year: i32) -> &'a SectorYearCell {
        t.cells
            .iter()
            .find(|c| c.sector == sector && c.year == year)
            .unwrap()
    }

    #[test]
    fn parses_valid_lines() {
        let input = r#"{"id":"P1","year":2000,"classes":["A01"],"abstract":"x","cited":[],"inventors":["i"],"applicants":["a"]}
{"id":"P2","year":2001,"classes":["B02","A01"],"abstract":"y","cited":["P1"],"inventors":[],"applicants":[]}
{"id":"P3","year":2001,"classes":["C03"],"abstract":"z","cited":["P1","P2"],"inventors":[],"applicants":[]}
"#;
        let rep = parse_records(input.as_bytes(), YearRange::default()).unwrap();
        assert_eq!(rep.records.len(), 3);
        assert!(rep.errors.is_empty());
        assert_eq!(rep.records[1].classes, vec!["B02", "A01"]);
    }

    #[test]
    fn missing_classes_is_a_record_error() {
        let input = r#"{"id":"P1","year":2000,"abstract":"x"}"#;
        let rep = parse_records(input.as_bytes(), YearRange::default()).unwrap();
        assert!(rep.records.is_empty());
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 1);
        assert_eq!(rep.errors[0].field.as_deref(), Some("classes"));
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let input = r#"{"id":"X1","year":2000,"classes":["A01"],"abstract":""}
{"id":"X2","year":2000,"classes":["A01"],"abstract":""}
{"id":"X1","year":2001,"classes":["B01"],"abstract":""}"#;
        match parse_records(input.as_bytes(), YearRange::default()) {
            Err(Error::DuplicateId { id, first, second }) => {
                assert_eq!(id, "X1");
                assert_eq!((first, second), (1, 3));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_year_and_self_citation() {
        let input = r#"{"id":"P1","year":1950,"classes":["A01"],"abstract":""}
{"id":"P2","year":1990,"classes":["A01"],"abstract":"","cited":["P2","P9"]}"#;
        let rep = parse_records(input.as_bytes(), YearRange::default()).unwrap();
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.records[0].cited_ids, vec!["P9"]);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn assignment_modes() {
        let recs = vec![rec("p", 2000, &["A", "B"], &[])];
        let u = aggregate(&recs, AssignmentMode::Univocal);
        assert_eq!(cell(&u, "A", 2000).count, 1.0);
        assert_eq!(cell(&u, "B", 2000).count, 0.0);
        let m = aggregate(&recs, AssignmentMode::Multiple);
        assert_eq!(cell(&m, "A", 2000).count, 1.0);
        assert_eq!(cell(&m, "B", 2000).count, 1.0);
        let f = aggregate(&recs, AssignmentMode::Fractional);
        assert_eq!(cell(&f, "A", 2000).count, 0.5);
        assert_eq!(cell(&f, "B", 2000).count, 0.5);
    }

    #[test]
    fn cell_fields() {
        let mut a = rec("p1", 2000, &["A"], &[]);
        a.inventor_ids = vec!["x".into(), "y".into(), "z".into()];
        a.applicant_ids = vec!["f1".into(), "f2".into()];
        let mut b = rec("p2", 2000, &["A", "B"], &["p1"]);
        b.applicant_ids = vec!["f1".into()];
        let c = rec("p3", 2001, &["B"], &["p1", "p2", "zz"]);
        let t = aggregate(&[a, b, c], AssignmentMode::Univocal);
        let a00 = cell(&t, "A", 2000);
        assert_eq!(a00.count, 2.0);
        assert_eq!(a00.bwd_cites, 1.0);
        assert_eq!(a00.fwd_cites, 3.0);
        assert_eq!(a00.inventors, 2.0);
        assert_eq!(a00.applicants, 2.0);
        assert_eq!(a00.collaborations, 1.0);
        // f1 patents in 2000 span {A, B}; f2 spans {A}.
        assert_eq!(a00.class_span, 1.5);
        // Balanced grid: sector A in 2001 still present with zeros.
        assert_eq!(cell(&t, "A", 2001).count, 0.0);
        assert_eq!(t.cells.len(), 4);
    }

    #[test]
    fn flows_simple() {
        let recs = vec![
            rec("a1", 2000, &["A"], &["b1", "b2"]),
            rec("b1", 2000, &["B"], &[]),
            rec("b2", 2000, &["B"], &[]),
        ];
        let t = citation_flows(&recs, AssignmentMode::Univocal);
        assert_eq!(t.flows.len(), 1);
        assert_eq!(
            (
                t.flows[0].from_sector.as_str(),
                t.flows[0].to_sector.as_str()
            ),
            ("A", "B")
        );
        assert_eq!(t.flows[0].count, 2.0);
    }

    #[test]
    fn flows_empty_without_citations() {
        let recs = vec![rec("a1", 2000, &["A"], &[]), rec("b1", 2000, &["B"], &[])];
        assert!(citation_flows(&recs, AssignmentMode::Univocal)
            .flows
            .is_empty());
    }

    #[test]
    fn flows_hand_enumerated() {
        // Three A patents each citing one B and one C patent: 6 pairs.
        let mut recs = vec![rec("b", 2000, &["B"], &[]), rec("c", 2000, &["C"], &[])];
        for i in 0..3 {
            recs.push(rec(&format!("a{i}"), 2001, &["A"], &["b", "c"]));
        }
        let t = citation_flows(&recs, AssignmentMode::Univocal);
        let get = |to: &str| {
            t.flows
                .iter()
                .find(|f| f.from_sector == "A" && f.to_sector == to)
                .unwrap()
                .count
        };
        assert_eq!(get("B"), 3.0);
        assert_eq!(get("C"), 3.0);
    }

    #[test]
    fn mostly_unresolved_citations_warn() {
        let recs = vec![
            rec("a", 2000, &["A"], &["x", "y", "z"]),
            rec("b", 2000, &["B"], &["a"]),
        ];
        let t = citation_flows(&recs, AssignmentMode::Univocal);
        assert_eq!((t.resolved, t.unresolved), (1, 3));
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn cell_csv_round_trip() {
        let recs = vec![
            rec("p", 2000, &["A", "B"], &[]),
            rec("q", 2002, &["B"], &["p"]),
        ];
        let t = aggregate(&recs, AssignmentMode::Fractional);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(CellTable::CSV_HEADER));
        let back = CellTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.sectors, t.sectors);
        assert_eq!(back.years, t.years);
        for (a, b) in back.cells.iter().zip(&t.cells) {
            assert_eq!(a.count, b.count);
            assert_eq!(a.class_span, b.class_span);
        }
    }
}
