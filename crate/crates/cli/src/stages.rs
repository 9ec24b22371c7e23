//! The pipeline stages. Each reads upstream artifacts through [`StageIo`],
//! which records their digests, and writes its own files under a directory
//! named after the stage.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use technet::centrality::{centrality_scores, latent_factor, CentralityScores, LatentFactor};
use technet::corpus::{
    aggregate, citation_flows, parse_records, write_records, CellTable, FlowTable, PatentRecord,
    YearRange,
};
use technet::econo::{build_panel, fit, select_lag_order, write_table, ModelVars, Panel, DEP};
use technet::events::{detect_events, subperiod_compare, write_irf_csv, LpVars, ShockKind};
use technet::linkage::{
    self, direct_linkage, weighted_linkage, LinkageSeries, LinkageVariant, WeightSource,
};
use technet::simnet::{
    citation_share_matrix, cosine_matrix, merge_networks, prune_lower_quartile,
    random_counterfactual, MatrixSidecar, WeightMatrix, YearNetwork,
};
use technet::stats::{correlation, describe, Descriptives};
use technet::synth::generate_corpus;
use technet::textproc::{
    read_binary, tokenize_documents, vectorize, write_binary, write_triplets, RowKey,
};
use technet::{Error, Result};

use crate::config::{derive_seed, parse_variants, MergeSource, RunConfig};
use crate::manifest::{sha256_hex, Artifact, Stage};
use crate::svg;

/// File access for one stage run.
pub struct StageIo<'a> {
    pub cfg: &'a RunConfig,
    pub dir: PathBuf,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// External files read, by absolute path.
    pub external: BTreeMap<String, String>,
}

impl<'a> StageIo<'a> {
    pub fn new(cfg: &'a RunConfig, dir: &Path) -> Self {
        StageIo {
            cfg,
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            external: BTreeMap::new(),
        }
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.dir.join(rel).exists()
    }

    pub fn read(&mut self, rel: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(rel);
        let bytes =
            std::fs::read(&path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        if !self.inputs.iter().any(|a| a.path == rel) {
            self.inputs.push(Artifact {
                path: rel.to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(bytes)
    }

    pub fn read_external(&mut self, path: &Path) -> Result<Vec<u8>> {
        let abs = std::fs::canonicalize(path)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        let bytes =
            std::fs::read(&abs).map_err(|e| Error::input(format!("{}: {e}", abs.display())))?;
        let key = abs.to_string_lossy().into_owned();
        let digest = sha256_hex(&bytes);
        self.external.insert(key.clone(), digest.clone());
        self.inputs.push(Artifact {
            path: key,
            sha256: digest,
        });
        Ok(bytes)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.outputs.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_with(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn read_json<T: serde::de::DeserializeOwned>(&mut self, rel: &str) -> Result<T> {
        let bytes = self.read(rel)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::input(format!("{rel}: {e}")))
    }
}

pub fn run(stage: Stage, io: &mut StageIo<'_>) -> Result<()> {
    match stage {
        Stage::Ingest => ingest(io),
        Stage::Text => text(io),
        Stage::Network => network(io),
        Stage::Centrality => centrality(io),
        Stage::Linkage => linkage_stage(io),
        Stage::Estimate => estimate(io),
        Stage::Events => events(io),
        Stage::Report => report(io),
        Stage::Merge => merge(io),
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::input(e.to_string())
}

/// Synthetic records for the configured corpus spec and root seed.
pub fn synthetic_records(cfg: &RunConfig) -> Vec<PatentRecord> {
    generate_corpus(&cfg.synth, derive_seed(cfg.seed, "synth"))
}

#[derive(Serialize)]
struct IngestSummary {
    records: usize,
    rejected: usize,
    warnings: usize,
    sectors: usize,
    years: (i32, i32),
    resolved_citations: usize,
    unresolved_citations: usize,
}

fn ingest(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let bytes = match &cfg.input.records {
        Some(path) => io.read_external(path)?,
        None => {
            let mut buf = Vec::new();
            write_records(&mut buf, &synthetic_records(cfg))?;
            io.write("ingest/synthetic.jsonl", &buf)?;
            buf
        }
    };
    let years = YearRange {
        first: cfg.input.first_year,
        last: cfg.input.last_year,
    };
    let parsed = parse_records(bytes.as_slice(), years)?;
    for w in &parsed.warnings {
        log::debug!("{w}");
    }
    if !parsed.warnings.is_empty() {
        warn!(
            "{} record warnings (run with RUST_LOG=debug to list them)",
            parsed.warnings.len()
        );
    }
    if !parsed.errors.is_empty() {
        warn!(
            "{} records rejected; see ingest/rejected.csv",
            parsed.errors.len()
        );
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["line", "field", "message"])
        .map_err(csv_error)?;
    for e in &parsed.errors {
        w.write_record([
            e.line.to_string(),
            e.field.clone().unwrap_or_default(),
            e.message.clone(),
        ])
        .map_err(csv_error)?;
    }
    let rejected = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
    io.write("ingest/rejected.csv", &rejected)?;
    let records = parsed.records;
    if records.is_empty() {
        return Err(Error::input("no valid patent records in the input"));
    }

    let cells = aggregate(&records, cfg.input.assignment);
    let flows = citation_flows(&records, cfg.input.assignment);
    for w in &flows.warnings {
        warn!("{w}");
    }
    io.write_with("ingest/records.jsonl", |b| write_records(b, &records))?;
    io.write_with("ingest/cells.csv", |b| cells.write_csv(b))?;
    io.write_with("ingest/flows.csv", |b| flows.write_csv(b))?;
    let summary = IngestSummary {
        records: records.len(),
        rejected: parsed.errors.len(),
        warnings: parsed.warnings.len(),
        sectors: cells.sectors.len(),
        years: (cells.years[0], *cells.years.last().expect("nonempty")),
        resolved_citations: flows.resolved,
        unresolved_citations: flows.unresolved,
    };
    io.write_json("ingest/summary.json", &summary)?;
    info!(
        "ingested {} records, {} sectors, {} years",
        records.len(),
        cells.sectors.len(),
        cells.years.len()
    );
    Ok(())
}

fn read_cells(io: &mut StageIo<'_>) -> Result<CellTable> {
    CellTable::read_csv(io.read("ingest/cells.csv")?.as_slice())
}

fn text(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let stopwords = match &cfg.text.stopwords {
        Some(path) => {
            let bytes = io.read_external(path)?;
            Some(String::from_utf8(bytes).map_err(|_| Error::input("stopword file is not UTF-8"))?)
        }
        None => None,
    };
    let pipeline = cfg.text.pipeline(stopwords.as_deref())?;
    let bytes = io.read("ingest/records.jsonl")?;
    let records = parse_records(
        bytes.as_slice(),
        YearRange {
            first: i32::MIN,
            last: i32::MAX,
        },
    )?
    .records;

    // Every abstract goes to its primary class.
    let mut abstracts: BTreeMap<RowKey, Vec<&str>> = BTreeMap::new();
    for r in &records {
        abstracts
            .entry(RowKey::new(r.primary_class(), r.app_year))
            .or_default()
            .push(&r.abstract_text);
    }
    let docs = tokenize_documents(&abstracts, &pipeline);
    let v = vectorize(&docs, &pipeline)?;
    if !v.zero_rows.is_empty() {
        warn!(
            "{} sector-year documents have no terms left after filtering",
            v.zero_rows.len()
        );
    }
    let (mut triplets, mut side) = (Vec::new(), Vec::new());
    write_triplets(&v, &mut triplets, &mut side)?;
    io.write("text/dtm.csv", &triplets)?;
    io.write("text/dtm.json", &side)?;
    io.write_with("text/dtm.bin", |b| write_binary(&v, b))?;
    info!(
        "document-term matrix: {} rows, {} terms, {} entries",
        v.n_rows(),
        v.n_terms(),
        v.nnz()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum MatrixKind {
    Text,
    Citation,
    Random,
}

impl MatrixKind {
    fn tag(self) -> &'static str {
        match self {
            MatrixKind::Text => "text",
            MatrixKind::Citation => "citation",
            MatrixKind::Random => "random",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(MatrixKind::Text),
            "citation" => Ok(MatrixKind::Citation),
            "random" => Ok(MatrixKind::Random),
            _ => Err(Error::input(format!(
                "unknown matrix kind {s:?} in the network index"
            ))),
        }
    }
}

const NETWORK_INDEX: &str = "network/index.csv";

fn matrix_path(kind: MatrixKind, year: i32) -> String {
    format!("network/{}_{year}", kind.tag())
}

fn write_matrix(
    io: &mut StageIo<'_>,
    base: &str,
    wm: &WeightMatrix,
    threshold: Option<f64>,
) -> Result<()> {
    io.write_with(&format!("{base}.csv"), |b| wm.write_csv(b))?;
    io.write_json(&format!("{base}.json"), &wm.sidecar(threshold))
}

fn read_matrix(io: &mut StageIo<'_>, base: &str) -> Result<WeightMatrix> {
    let side: MatrixSidecar = io.read_json(&format!("{base}.json"))?;
    WeightMatrix::read_csv(io.read(&format!("{base}.csv"))?.as_slice(), &side)
}

fn read_index(io: &mut StageIo<'_>) -> Result<Vec<(i32, MatrixKind, String)>> {
    let bytes = io.read(NETWORK_INDEX)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let year = rec[0]
            .parse()
            .map_err(|_| Error::input("bad year in the network index"))?;
        out.push((year, MatrixKind::parse(&rec[1])?, rec[2].to_string()));
    }
    Ok(out)
}

type YearMatrices = (
    i32,
    Option<WeightMatrix>,
    WeightMatrix,
    Option<WeightMatrix>,
);

fn network(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let cells = read_cells(io)?;
    let flows = FlowTable::read_csv(io.read("ingest/flows.csv")?.as_slice())?;
    let v = read_binary(io.read("text/dtm.bin")?.as_slice())?;
    let built: Vec<YearMatrices> = cells
        .years
        .par_iter()
        .map(|&year| -> Result<YearMatrices> {
            let text = if v.rows_for_year(year).len() >= 2 {
                Some(cosine_matrix(&v, year)?)
            } else {
                warn!("year {year}: fewer than two sector documents; no text network");
                None
            };
            let cite = citation_share_matrix(
                &flows,
                &cells.sectors,
                year,
                cfg.network.window,
                cfg.network.normalizer,
            );
            let random = match &text {
                Some(t) if cfg.network.counterfactual => Some(random_counterfactual(
                    t,
                    derive_seed(cfg.seed, &format!("counterfactual/{year}")),
                )?),
                _ => None,
            };
            Ok((year, text, cite, random))
        })
        .collect::<Result<_>>()?;

    let mut index = String::from("year,kind,path\n");
    let mut summary = String::from("year,kind,sectors,arcs,kept_arcs,threshold,directed,flagged\n");
    for (year, text, cite, random) in &built {
        for (kind, wm) in [
            (MatrixKind::Text, text.as_ref()),
            (MatrixKind::Citation, Some(cite)),
            (MatrixKind::Random, random.as_ref()),
        ] {
            let Some(wm) = wm else { continue };
            let pruned = prune_lower_quartile(wm);
            let base = matrix_path(kind, *year);
            write_matrix(io, &base, wm, Some(pruned.prune_threshold))?;
            let _ = writeln!(index, "{year},{},{base}", kind.tag());
            let _ = writeln!(
                summary,
                "{year},{},{},{},{},{},{},{}",
                kind.tag(),
                wm.n(),
                YearNetwork::unpruned(wm).arc_count(),
                pruned.arc_count(),
                pruned.prune_threshold,
                pruned.directed,
                wm.flagged.len()
            );
        }
    }
    io.write(NETWORK_INDEX, index.as_bytes())?;
    io.write("network/summary.csv", summary.as_bytes())?;
    Ok(())
}

fn centrality(io: &mut StageIo<'_>) -> Result<()> {
    let standardize = io.cfg.centrality.standardize;
    let index = read_index(io)?;
    let mut mats = Vec::new();
    for (year, kind, base) in index {
        if kind == MatrixKind::Text {
            mats.push((year, read_matrix(io, &base)?));
        }
    }
    if mats.is_empty() {
        return Err(Error::input("no text networks to compute centrality on"));
    }
    let computed: Vec<(CentralityScores, Option<LatentFactor>)> = mats
        .par_iter()
        .map(|(year, wm)| {
            let scores = centrality_scores(&prune_lower_quartile(wm));
            let lf = latent_factor(&scores, standardize)
                .map_err(|e| warn!("year {year}: no latent factor ({e})"))
                .ok();
            (scores, lf)
        })
        .collect();

    let mut scores_csv = Vec::new();
    writeln!(scores_csv, "{}", CentralityScores::CSV_HEADER)?;
    let mut latent_csv = String::from(
        "year,degree,betweenness,closeness,distinctiveness,variance_explained,dropped\n",
    );
    for (s, lf) in &computed {
        s.write_csv_rows(&mut scores_csv, lf.as_ref())?;
        if let Some(lf) = lf {
            let l = lf.loadings;
            let _ = writeln!(
                latent_csv,
                "{},{},{},{},{},{},{}",
                lf.year,
                l[0],
                l[1],
                l[2],
                l[3],
                lf.variance_explained,
                lf.dropped.join("|")
            );
        }
    }
    io.write("centrality/scores.csv", &scores_csv)?;
    io.write("centrality/latent.csv", latent_csv.as_bytes())?;
    Ok(())
}

/// Centrality columns per year as read back from `centrality/scores.csv`.
struct CentralityTable {
    by_year: BTreeMap<i32, (Vec<String>, [Vec<f64>; 5])>,
}

impl CentralityTable {
    const COLUMNS: [LinkageVariant; 5] = [
        LinkageVariant::DegreeNd,
        LinkageVariant::BetwNb,
        LinkageVariant::ClosNc,
        LinkageVariant::DistNd,
        LinkageVariant::LatentFactor,
    ];

    fn read(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let mut by_year: BTreeMap<i32, (Vec<String>, [Vec<f64>; 5])> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let year: i32 = rec[0]
                .parse()
                .map_err(|_| Error::input("bad year in centrality scores"))?;
            let entry = by_year.entry(year).or_default();
            entry.0.push(rec[1].to_string());
            for (k, col) in entry.1.iter_mut().enumerate() {
                let cell = &rec[k + 2];
                col.push(if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse()
                        .map_err(|_| Error::input("bad centrality value"))?
                });
            }
        }
        Ok(CentralityTable { by_year })
    }

    /// Centrality values re-tagged as a regressor, unchanged.
    fn series(&self, variant: LinkageVariant, year: i32) -> Option<LinkageSeries> {
        let k = Self::COLUMNS.iter().position(|v| *v == variant)?;
        let (sectors, cols) = self.by_year.get(&year)?;
        let values = cols[k].clone();
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(LinkageSeries {
            variant,
            year,
            sectors: sectors.clone(),
            values,
        })
    }
}

fn outcome_vector(
    cells: &CellTable,
    wm: &WeightMatrix,
    measure: linkage::OutcomeMeasure,
) -> Result<Vec<f64>> {
    let y = cells
        .years
        .iter()
        .position(|&y| y == wm.year)
        .ok_or_else(|| Error::input(format!("year {} not in the cell table", wm.year)))?;
    let pos: HashMap<&str, usize> = cells
        .sectors
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    wm.sectors
        .iter()
        .map(|s| {
            pos.get(s.as_str())
                .map(|&i| technet::econo::outcome_value(cells.get(i, y), measure))
                .ok_or_else(|| Error::input(format!("sector {s} not in the cell table")))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SpectralRow {
    year: i32,
    variant: String,
    source: String,
    spectral_radius: f64,
    original_radius: Option<f64>,
    rescale_factor: Option<f64>,
    condition: f64,
    residual: f64,
}

const SPECTRAL_HEADER: &str =
    "year,variant,source,spectral_radius,original_radius,rescale_factor,condition,residual";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Counterfactual variants: the text-weighted regressors recomputed on the
/// permuted matrices.
const COUNTERFACTUAL_VARIANTS: [LinkageVariant; 2] = [LinkageVariant::Twc, LinkageVariant::Twf];

fn linkage_stage(io: &mut StageIo<'_>) -> Result<()> {
    let variants = io.cfg.linkage.parsed()?;
    let cells = read_cells(io)?;
    let index = read_index(io)?;
    let cent = CentralityTable::read(&io.read("centrality/scores.csv")?)?;
    let mut mats: BTreeMap<(MatrixKind, i32), WeightMatrix> = BTreeMap::new();
    for (year, kind, base) in index {
        mats.insert((kind, year), read_matrix(io, &base)?);
    }

    type YearOut = (Vec<LinkageSeries>, Vec<SpectralRow>, Vec<LinkageSeries>);
    let per_year: Vec<YearOut> = cells
        .years
        .par_iter()
        .map(|&year| -> Result<YearOut> {
            let (mut series, mut spectral, mut cf) = (Vec::new(), Vec::new(), Vec::new());
            for &v in &variants {
                match v.weighting() {
                    Some((source, measure)) => {
                        let kind = match source {
                            WeightSource::Text => MatrixKind::Text,
                            WeightSource::Citation => MatrixKind::Citation,
                        };
                        let Some(wm) = mats.get(&(kind, year)) else {
                            continue;
                        };
                        let (s, op) =
                            weighted_linkage(v, wm, &outcome_vector(&cells, wm, measure)?)?;
                        if let Some(op) = op {
                            spectral.push(SpectralRow {
                                year,
                                variant: v.tag().into(),
                                source: kind.tag().into(),
                                spectral_radius: op.spectral_radius,
                                original_radius: op.rescaling.map(|r| r.original_radius),
                                rescale_factor: op.rescaling.map(|r| r.factor),
                                condition: op.condition,
                                residual: op.residual,
                            });
                        }
                        series.push(s);
                    }
                    None => match cent.series(v, year) {
                        Some(s) => series.push(s),
                        None => warn!("year {year}: no {v} scores"),
                    },
                }
            }
            if let Some(wm) = mats.get(&(MatrixKind::Random, year)) {
                for v in COUNTERFACTUAL_VARIANTS {
                    let (_, measure) = v.weighting().expect("weight-based variant");
                    cf.push(direct_linkage(
                        wm,
                        &outcome_vector(&cells, wm, measure)?,
                        v,
                    )?);
                }
            }
            Ok((series, spectral, cf))
        })
        .collect::<Result<_>>()?;

    let mut series: Vec<LinkageSeries> = Vec::new();
    let mut spectral = Vec::new();
    let mut cf = Vec::new();
    for (s, sp, c) in per_year {
        series.extend(s);
        spectral.extend(sp);
        cf.extend(c);
    }
    if series.is_empty() {
        return Err(Error::input("no linkage series could be built"));
    }
    let rank = |v: LinkageVariant| variants.iter().position(|x| *x == v).unwrap_or(usize::MAX);
    series.sort_by_key(|s| (rank(s.variant), s.year));
    cf.sort_by_key(|s| (s.variant, s.year));
    io.write_with("linkage/linkage.csv", |b| linkage::write_csv(&series, b))?;
    if !cf.is_empty() {
        io.write_with("linkage/counterfactual.csv", |b| linkage::write_csv(&cf, b))?;
    }
    let mut text = format!("{SPECTRAL_HEADER}\n");
    for r in &spectral {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.year,
            r.variant,
            r.source,
            r.spectral_radius,
            opt(r.original_radius),
            opt(r.rescale_factor),
            r.condition,
            r.residual
        );
    }
    io.write("linkage/spectral.csv", text.as_bytes())?;
    Ok(())
}

fn estimate(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let cells = read_cells(io)?;
    let series = linkage::read_csv(io.read("linkage/linkage.csv")?.as_slice())?;
    let (panel, cols) = build_panel(&cells, &series, &cfg.panel)?;
    io.write_with("estimate/panel.csv", |b| panel.write_csv(b))?;

    let wanted: Vec<String> = if cfg.estimate.variants.is_empty() {
        cols.linkage.clone()
    } else {
        parse_variants(&cfg.estimate.variants)?
            .iter()
            .map(|v| v.tag().to_string())
            .collect()
    };
    let mut jobs: Vec<(String, &Panel, String, usize)> = Vec::new();
    for tag in &wanted {
        if !panel.has(tag) {
            return Err(Error::input(format!(
                "linkage variant {tag} was not built; add it to linkage.variants"
            )));
        }
        for m in 0..cfg.estimate.models.len() {
            jobs.push((label(tag, m, cfg), &panel, tag.clone(), m));
        }
    }
    let cf_panel = if io.exists("linkage/counterfactual.csv") {
        let cf = linkage::read_csv(io.read("linkage/counterfactual.csv")?.as_slice())?;
        Some(build_panel(&cells, &cf, &cfg.panel)?.0)
    } else {
        None
    };
    if let Some(p) = &cf_panel {
        for v in COUNTERFACTUAL_VARIANTS {
            for m in 0..cfg.estimate.models.len() {
                jobs.push((
                    format!("random {}", label(v.tag(), m, cfg)),
                    p,
                    v.tag().to_string(),
                    m,
                ));
            }
        }
    }

    type FitOut = (
        String,
        technet::econo::EstimationResult,
        Vec<(usize, Option<f64>)>,
    );
    let fits: Vec<FitOut> = jobs
        .par_iter()
        .map(|(label, panel, tag, m)| -> Result<FitOut> {
            let spec = &cfg.estimate.models[*m];
            let mut regs = vec![tag.as_str()];
            regs.extend(cols.controls.iter().map(String::as_str));
            let vars = ModelVars::new(DEP, &regs);
            let (res, trail) = if cfg.estimate.select_lags {
                select_lag_order(panel, &vars, spec)?
            } else {
                (fit(panel, &vars, spec)?, Vec::new())
            };
            Ok((label.clone(), res, trail))
        })
        .collect::<Result<_>>()?;

    let mut trail_csv = String::from("fit,q,serial_p\n");
    for (label, _, trail) in &fits {
        for (q, p) in trail {
            let _ = writeln!(trail_csv, "{label},{q},{}", opt(*p));
        }
    }
    let table: Vec<(String, technet::econo::EstimationResult)> =
        fits.into_iter().map(|(l, r, _)| (l, r)).collect();
    io.write_with("estimate/estimates.csv", |b| write_table(&table, b))?;
    io.write("estimate/lag_selection.csv", trail_csv.as_bytes())?;
    Ok(())
}

fn label(tag: &str, model: usize, cfg: &RunConfig) -> String {
    if cfg.estimate.models.len() > 1 {
        format!("{tag} {}", cfg.estimate.models[model].label())
    } else {
        tag.to_string()
    }
}

fn events(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let panel = Panel::read_csv(io.read("estimate/panel.csv")?.as_slice())?;
    let series = linkage::read_csv(io.read("linkage/linkage.csv")?.as_slice())?;
    let shocks = [
        (
            ShockKind::Direct,
            &cfg.events.direct_variant,
            &cfg.events.latent_variant,
        ),
        (
            ShockKind::Latent,
            &cfg.events.latent_variant,
            &cfg.events.direct_variant,
        ),
    ];
    let window = cfg.events.window.unwrap_or((
        panel.years[0],
        *panel.years.last().expect("panel has years"),
    ));
    let splits: Vec<(String, i32, i32)> = cfg
        .events
        .subperiods
        .iter()
        .map(|s| (s.name.clone(), s.from, s.to))
        .collect();

    let mut results = Vec::new();
    let mut events_csv = String::from("shock,sector,year,increase\n");
    for (shock, e_tag, x_tag) in shocks {
        let e_variant: LinkageVariant = e_tag.parse()?;
        let x_variant: LinkageVariant = x_tag.parse()?;
        if !panel.has(x_variant.tag()) || !series.iter().any(|s| s.variant == e_variant) {
            warn!(
                "{} shock skipped: {e_variant} or {x_variant} was not built",
                shock.tag()
            );
            continue;
        }
        // Events come from the untransformed linkage levels.
        let mut raw = Panel::new(panel.sectors.clone(), panel.years.clone())?;
        let mut values = vec![f64::NAN; raw.len()];
        let sector_pos: HashMap<&str, usize> = panel
            .sectors
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        for s in series.iter().filter(|s| s.variant == e_variant) {
            let Some(t) = panel.years.iter().position(|&y| y == s.year) else {
                continue;
            };
            for (sector, &v) in s.sectors.iter().zip(&s.values) {
                if let Some(&i) = sector_pos.get(sector.as_str()) {
                    values[raw.idx(i, t)] = v;
                }
            }
        }
        raw.set(e_variant.tag(), values)?;
        let ev = detect_events(&raw, e_variant.tag(), shock, window)?;
        for e in &ev.events {
            let _ = writeln!(
                events_csv,
                "{},{},{},{}",
                shock.tag(),
                e.sector,
                e.year,
                e.increase
            );
        }
        let vars = LpVars {
            outcome: DEP.to_string(),
            control: x_variant.tag().to_string(),
        };
        results.extend(subperiod_compare(
            &panel,
            &ev,
            &vars,
            &cfg.events.lp,
            &splits,
        )?);
    }
    if results.is_empty() {
        return Err(Error::input(
            "no shock variable available for the event study",
        ));
    }
    io.write("events/events.csv", events_csv.as_bytes())?;
    io.write_with("events/irf.csv", |b| write_irf_csv(&results, b))?;
    io.write("events/irf.svg", svg::irf(&results).as_bytes())?;
    Ok(())
}

const DESCRIPTIVES_HEADER: &str = "variable,n,mean,sd,p1,p25,p50,p75,p99,cv";

fn descriptives_row(name: &str, d: &Descriptives) -> String {
    format!(
        "{name},{},{},{},{},{},{},{},{},{}",
        d.n, d.mean, d.sd, d.p1, d.p25, d.p50, d.p75, d.p99, d.cv
    )
}

fn report(io: &mut StageIo<'_>) -> Result<()> {
    let cells = read_cells(io)?;
    let series = linkage::read_csv(io.read("linkage/linkage.csv")?.as_slice())?;
    let spectral = String::from_utf8(io.read("linkage/spectral.csv")?)
        .map_err(|_| Error::input("spectral.csv is not UTF-8"))?;

    let mut vars: Vec<(String, Vec<f64>)> = vec![
        (
            "patents".into(),
            cells.cells.iter().map(|c| c.count).collect(),
        ),
        (
            "backward_citations".into(),
            cells.cells.iter().map(|c| c.bwd_cites).collect(),
        ),
        (
            "forward_citations".into(),
            cells.cells.iter().map(|c| c.fwd_cites).collect(),
        ),
        (
            "inventors".into(),
            cells.cells.iter().map(|c| c.inventors).collect(),
        ),
        (
            "applicants".into(),
            cells.cells.iter().map(|c| c.applicants).collect(),
        ),
        (
            "collaborations".into(),
            cells.cells.iter().map(|c| c.collaborations).collect(),
        ),
        (
            "class_span".into(),
            cells.cells.iter().map(|c| c.class_span).collect(),
        ),
    ];
    let mut variants: Vec<LinkageVariant> = Vec::new();
    let mut keyed: BTreeMap<LinkageVariant, BTreeMap<(String, i32), f64>> = BTreeMap::new();
    for s in &series {
        if !variants.contains(&s.variant) {
            variants.push(s.variant);
        }
        let m = keyed.entry(s.variant).or_default();
        for (sector, &v) in s.sectors.iter().zip(&s.values) {
            m.insert((sector.clone(), s.year), v);
        }
    }
    for v in &variants {
        vars.push((v.tag().to_string(), keyed[v].values().copied().collect()));
    }
    let stats: Vec<(String, Descriptives)> = vars
        .iter()
        .map(|(n, xs)| (n.clone(), describe(xs)))
        .collect();

    let mut desc_csv = format!("{DESCRIPTIVES_HEADER}\n");
    for (name, d) in &stats {
        let _ = writeln!(desc_csv, "{}", descriptives_row(name, d));
    }

    // Pairwise correlations over the sector-years both variants cover.
    let k = variants.len();
    let mut corr = vec![vec![f64::NAN; k]; k];
    for a in 0..k {
        for b in 0..k {
            let (ma, mb) = (&keyed[&variants[a]], &keyed[&variants[b]]);
            let (xs, ys): (Vec<f64>, Vec<f64>) = ma
                .iter()
                .filter_map(|(key, &x)| mb.get(key).map(|&y| (x, y)))
                .unzip();
            corr[a][b] = if a == b { 1.0 } else { correlation(&xs, &ys) };
        }
    }
    let mut corr_csv = String::from("variant");
    for v in &variants {
        let _ = write!(corr_csv, ",{v}");
    }
    corr_csv.push('\n');
    for (a, v) in variants.iter().enumerate() {
        let _ = write!(corr_csv, "{v}");
        for c in &corr[a] {
            let _ = write!(corr_csv, ",{c}");
        }
        corr_csv.push('\n');
    }

    let mut md = String::from("# Run report\n\n## Descriptive statistics\n\n");
    md.push_str("| variable | n | mean | sd | p1 | p25 | p50 | p75 | p99 | cv |\n|---|---|---|---|---|---|---|---|---|---|\n");
    for (name, d) in &stats {
        let _ = writeln!(
            md,
            "| {name} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
            d.n, d.mean, d.sd, d.p1, d.p25, d.p50, d.p75, d.p99, d.cv
        );
    }
    md.push_str("\n## Correlation of linkage variants\n\n|   |");
    for v in &variants {
        let _ = write!(md, " {v} |");
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(k));
    md.push('\n');
    for (a, v) in variants.iter().enumerate() {
        let _ = write!(md, "| {v} |");
        for c in &corr[a][..=a] {
            let _ = write!(md, " {:.3} |", c);
        }
        md.push_str(&" |".repeat(k - a - 1));
        md.push('\n');
    }
    md.push_str("\n## Leontief inversions\n\n| year | variant | source | spectral radius | original radius | rescale factor |\n|---|---|---|---|---|---|\n");
    for line in spectral.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() >= 6 {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                f[0],
                f[1],
                f[2],
                f[3],
                or_dash(f[4]),
                or_dash(f[5])
            );
        }
    }

    io.write("report/descriptives.csv", desc_csv.as_bytes())?;
    io.write("report/correlations.csv", corr_csv.as_bytes())?;
    io.write("report/report.md", md.as_bytes())?;
    Ok(())
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

/// Place a matrix on a larger sector list; sectors it lacks get no arcs.
fn embed(wm: &WeightMatrix, sectors: &[String]) -> WeightMatrix {
    let pos: Vec<usize> = wm
        .sectors
        .iter()
        .map(|s| {
            sectors
                .iter()
                .position(|t| t == s)
                .expect("sector in the union")
        })
        .collect();
    let mut w = nalgebra::DMatrix::zeros(sectors.len(), sectors.len());
    for i in 0..wm.n() {
        for j in 0..wm.n() {
            w[(pos[i], pos[j])] = wm.w[(i, j)];
        }
    }
    WeightMatrix {
        sectors: sectors.to_vec(),
        w,
        flagged: Vec::new(),
        ..wm.clone()
    }
}

fn merge(io: &mut StageIo<'_>) -> Result<()> {
    let cfg = io.cfg;
    let want = match cfg.merge.source {
        MergeSource::Text => MatrixKind::Text,
        MergeSource::Citation => MatrixKind::Citation,
    };
    let index = read_index(io)?;
    let mut mats = Vec::new();
    for (_, _, base) in index.into_iter().filter(|e| e.1 == want) {
        let wm = read_matrix(io, &base)?;
        mats.push(if cfg.merge.pruned {
            prune_lower_quartile(&wm).weights
        } else {
            wm
        });
    }
    let mut sectors: Vec<String> = mats
        .iter()
        .flat_map(|m| m.sectors.iter().cloned())
        .collect();
    sectors.sort();
    sectors.dedup();
    let nets: Vec<YearNetwork> = mats
        .iter()
        .map(|m| YearNetwork::unpruned(&embed(m, &sectors)))
        .collect();
    let merged = merge_networks(&nets)?;
    let symmetric = merged.is_symmetric(1e-12);
    let mut edges = String::from("from,to,weight\n");
    for i in 0..merged.n() {
        for j in 0..merged.n() {
            let v = merged.w[(i, j)];
            if i != j && v > 0.0 && !(symmetric && j < i) {
                let _ = writeln!(edges, "{},{},{v}", merged.sectors[i], merged.sectors[j]);
            }
        }
    }
    let title = format!("{} network, {} years merged", want.tag(), nets.len());
    io.write("merge/edges.csv", edges.as_bytes())?;
    io.write(
        "merge/network.svg",
        svg::network(&merged, &title).as_bytes(),
    )?;
    Ok(())
}
