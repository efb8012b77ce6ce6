//! Dataset ingestion, posterior persistence and run manifests.
//!
//! Draw files are plain CSV behind a `# recbreak-draws v1` header line:
//!
//! - `draws.csv`: `param,chain,draw,value` for the named scalars;
//! - `daily_means.csv`: `chain,draw,block,t,doy,value` (yearly means use `doy = 0`);
//! - `w.csv`: `chain,draw,t,doy,site,value`. Daily surfaces carry their own
//!   `(t, doy)`; a block's time-constant surface is stored at `t = 0` with
//!   `doy` 0, 1 or 2 for the main, day-1 and day-2 blocks;
//! - `meta.json`: the [`DrawsMeta`].
//!
//! Floats are written in shortest round-trip form, so loading returns the
//! saved draws bit for bit.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::Block;
use crate::error::{Error, Result};
use crate::krige::{GridCell, PredictionGrid};
use crate::mcmc::{group_days, BlockDraw, Draw, DrawsMeta, PosteriorDraws, Variant};
use crate::records::{Indicator, RecordTensor, Site, TemperaturePanel, DAYS_PER_YEAR, MISSING};

pub const DRAWS_HEADER: &str = "# recbreak-draws v1";

const CUM_DAYS: [usize; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg: msg.into(),
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn line_of(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

fn field<'a>(r: &'a csv::StringRecord, headers: &HashMap<String, usize>, name: &str) -> &'a str {
    headers.get(name).and_then(|&i| r.get(i)).unwrap_or("").trim()
}

fn number<T: std::str::FromStr>(path: &Path, r: &csv::StringRecord, headers: &HashMap<String, usize>, name: &str) -> Result<T> {
    let s = field(r, headers, name);
    s.parse()
        .map_err(|_| parse_err(path, line_of(r), format!("cannot parse {name} from {s:?}")))
}

fn header_map(path: &Path, rdr: &mut csv::Reader<File>, required: &[&str]) -> Result<HashMap<String, usize>> {
    let h: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, n)| (n.trim().to_string(), i))
        .collect();
    for name in required {
        if !h.contains_key(*name) {
            return Err(parse_err(path, 1, format!("missing column {name:?}")));
        }
    }
    Ok(h)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?)
}

/// Stations: `site,x_km,y_km,dist_coast_km`.
pub fn read_stations(path: &Path) -> Result<Vec<Site>> {
    let mut rdr = open_csv(path)?;
    let h = header_map(path, &mut rdr, &["site", "x_km", "y_km", "dist_coast_km"])?;
    let mut sites: Vec<Site> = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let id = field(&r, &h, "site").to_string();
        if sites.iter().any(|s| s.id == id) {
            return Err(parse_err(path, line_of(&r), format!("duplicate station {id:?}")));
        }
        let site = Site::new(id, number(path, &r, &h, "x_km")?, number(path, &r, &h, "y_km")?, number(path, &r, &h, "dist_coast_km")?);
        if !(site.dist_coast_km > 0.0) {
            return Err(parse_err(path, line_of(&r), "distance to coast must be positive"));
        }
        sites.push(site);
    }
    if sites.is_empty() {
        return Err(format_err(path, "no stations"));
    }
    Ok(sites)
}

/// Result of reading a temperature file.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub panel: TemperaturePanel,
    /// Calendar year of `t = 1`.
    pub first_year: i32,
    /// Rows dated February 29, dropped from the 365-day grid.
    pub dropped_feb29: usize,
}

/// Day of a 365-day year for an ISO date, or `None` for February 29.
fn doy_of_date(s: &str) -> Option<std::result::Result<(i32, usize), ()>> {
    let parts: Vec<&str> = s.split('-').collect();
    let parse = || -> std::result::Result<(i32, usize, usize), ()> {
        if parts.len() != 3 {
            return Err(());
        }
        let y = parts[0].parse().map_err(|_| ())?;
        let m: usize = parts[1].parse().map_err(|_| ())?;
        let d: usize = parts[2].parse().map_err(|_| ())?;
        Ok((y, m, d))
    };
    match parse() {
        Err(()) => Some(Err(())),
        Ok((_, 2, 29)) => None,
        Ok((y, m, d)) => {
            const LEN: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
            if !(1..=12).contains(&m) || d == 0 || d > LEN[m - 1] {
                return Some(Err(()));
            }
            Some(Ok((y, CUM_DAYS[m - 1] + d)))
        }
    }
}

/// Reads temperatures (`site,year,doy,tmax_c` or `site,date,tmax_c`) for the
/// given stations. Blank `tmax_c` is missing. Dated input spans 365 days;
/// with `doy` the day axis ends at the largest day present.
pub fn ingest(temps: &Path, stations: &Path) -> Result<Ingested> {
    let sites = read_stations(stations)?;
    let index: HashMap<&str, usize> = sites.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut rdr = open_csv(temps)?;
    let h = header_map(temps, &mut rdr, &["site", "tmax_c"])?;
    let dated = h.contains_key("date");
    if !dated && !(h.contains_key("year") && h.contains_key("doy")) {
        return Err(parse_err(temps, 1, "need either a date column or year and doy columns"));
    }
    let mut rows: Vec<(usize, i32, usize, f64, u64)> = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let r = rec?;
        let line = line_of(&r);
        let id = field(&r, &h, "site");
        let &s = index
            .get(id)
            .ok_or_else(|| parse_err(temps, line, format!("unknown site {id:?}")))?;
        let (year, doy) = if dated {
            match doy_of_date(field(&r, &h, "date")) {
                None => {
                    dropped += 1;
                    continue;
                }
                Some(Err(())) => return Err(parse_err(temps, line, format!("bad date {:?}", field(&r, &h, "date")))),
                Some(Ok(v)) => v,
            }
        } else {
            let doy: usize = number(temps, &r, &h, "doy")?;
            if doy == 0 || doy > DAYS_PER_YEAR {
                return Err(parse_err(temps, line, format!("doy {doy} outside 1..=365")));
            }
            (number(temps, &r, &h, "year")?, doy)
        };
        let raw = field(&r, &h, "tmax_c");
        let v = if raw.is_empty() {
            MISSING
        } else {
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(temps, line, format!("cannot parse tmax_c from {raw:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(temps, line, "non-finite temperature"));
            }
            v
        };
        rows.push((s, year, doy, v, line));
    }
    if rows.is_empty() {
        return Err(format_err(temps, "no temperature rows"));
    }
    let first_year = rows.iter().map(|r| r.1).min().expect("nonempty");
    let last_year = rows.iter().map(|r| r.1).max().expect("nonempty");
    let years = (last_year - first_year + 1) as usize;
    let days = if dated { DAYS_PER_YEAR } else { rows.iter().map(|r| r.2).max().expect("nonempty") };
    let mut temps_buf = vec![MISSING; sites.len() * years * days];
    let mut seen = vec![0u64; temps_buf.len()];
    for (s, y, d, v, line) in rows {
        let o = (s * years + (y - first_year) as usize) * days + (d - 1);
        if seen[o] != 0 {
            return Err(parse_err(
                temps,
                line,
                format!("duplicate row for site {}, year {y}, doy {d} (first at line {})", sites[s].id, seen[o]),
            ));
        }
        seen[o] = line;
        temps_buf[o] = v;
    }
    Ok(Ingested {
        panel: TemperaturePanel::new(sites, years, days, temps_buf)?,
        first_year,
        dropped_feb29: dropped,
    })
}

/// Indicator export: `site,year,doy,indicator,tie_r` (`tie_r` empty unless tied).
pub fn write_indicators(path: &Path, tensor: &RecordTensor, sites: &[Site], first_year: i32) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site", "year", "doy", "indicator", "tie_r"])?;
    for (s, site) in sites.iter().enumerate() {
        for t in 1..=tensor.years() {
            for d in 1..=tensor.days() {
                let c = tensor.get(s, t, d);
                let r = c.tie_multiplicity().map_or(String::new(), |r| r.to_string());
                w.write_record([
                    site.id.clone(),
                    (first_year + t as i32 - 1).to_string(),
                    d.to_string(),
                    c.strict().to_string(),
                    r,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an indicator export back into a tensor ordered like `sites`.
pub fn read_indicators(path: &Path, sites: &[Site]) -> Result<(RecordTensor, i32)> {
    let index: HashMap<&str, usize> = sites.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut rdr = open_csv(path)?;
    let h = header_map(path, &mut rdr, &["site", "year", "doy", "indicator", "tie_r"])?;
    let mut rows = Vec::new();
    let mut max_doy = 0;
    for rec in rdr.records() {
        let r = rec?;
        let line = line_of(&r);
        let id = field(&r, &h, "site");
        let &s = index
            .get(id)
            .ok_or_else(|| parse_err(path, line, format!("unknown site {id:?}")))?;
        let year: i32 = number(path, &r, &h, "year")?;
        let doy: usize = number(path, &r, &h, "doy")?;
        if doy == 0 || doy > DAYS_PER_YEAR {
            return Err(parse_err(path, line, format!("doy {doy} outside 1..=365")));
        }
        max_doy = max_doy.max(doy);
        let ind: u8 = number(path, &r, &h, "indicator")?;
        let tie = field(&r, &h, "tie_r");
        let cell = match (ind, tie.is_empty()) {
            (1, true) => Indicator::Record,
            (0, true) => Indicator::NotRecord,
            (0, false) => Indicator::Tied(
                tie.parse()
                    .ok()
                    .filter(|&r: &u32| r >= 2)
                    .ok_or_else(|| parse_err(path, line, format!("bad tie_r {tie:?}")))?,
            ),
            _ => return Err(parse_err(path, line, "indicator must be 0 or 1, and 0 when tied")),
        };
        rows.push((s, year, doy, cell, line));
    }
    if rows.is_empty() {
        return Err(format_err(path, "no indicator rows"));
    }
    let first = rows.iter().map(|r| r.1).min().expect("nonempty");
    let years = (rows.iter().map(|r| r.1).max().expect("nonempty") - first + 1) as usize;
    let days = max_doy;
    let mut cells = vec![None; sites.len() * years * days];
    for (s, y, d, c, line) in rows {
        let o = (s * years + (y - first) as usize) * days + (d - 1);
        if cells[o].replace(c).is_some() {
            return Err(parse_err(path, line, "duplicate cell"));
        }
    }
    let cells: Vec<Indicator> = cells
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| format_err(path, "indicator grid has gaps"))?;
    Ok((RecordTensor::from_cells(sites.len(), years, days, cells)?, first))
}

/// Grid: `cell_id,x_km,y_km,dist_coast_km,block` (`block` may be empty).
pub fn read_grid(path: &Path) -> Result<PredictionGrid> {
    let mut rdr = open_csv(path)?;
    let h = header_map(path, &mut rdr, &["cell_id", "x_km", "y_km", "dist_coast_km"])?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let block = field(&r, &h, "block");
        cells.push(GridCell {
            id: field(&r, &h, "cell_id").to_string(),
            x_km: number(path, &r, &h, "x_km")?,
            y_km: number(path, &r, &h, "y_km")?,
            dist_coast_km: number(path, &r, &h, "dist_coast_km")?,
            block: (!block.is_empty()).then(|| block.to_string()),
        });
    }
    PredictionGrid::new(cells)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn block_code(b: Block) -> usize {
    match b {
        Block::Main => 0,
        Block::Day1 => 1,
        Block::Day2 => 2,
    }
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    format: String,
    meta: DrawsMeta,
}

fn draws_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{DRAWS_HEADER}")?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes the draws into `dir` (created if needed).
pub fn persist_draws(draws: &PosteriorDraws, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let meta = &draws.meta;
    let variant = meta.variant;
    let paths = ["meta.json", "draws.csv", "daily_means.csv", "w.csv"].map(|f| dir.join(f));
    let json = serde_json::to_string_pretty(&MetaFile {
        format: DRAWS_HEADER.trim_start_matches("# ").to_string(),
        meta: meta.clone(),
    })?;
    fs::write(&paths[0], json + "\n")?;

    let mut w = draws_writer(&paths[1])?;
    w.write_record(["param", "chain", "draw", "value"])?;
    for (c, chain) in draws.chains.iter().enumerate() {
        for (k, d) in chain.iter().enumerate() {
            for (name, v) in d.scalars(variant) {
                w.write_record([name, c.to_string(), k.to_string(), fmt(v)])?;
            }
        }
    }
    w.flush()?;

    let mut w = draws_writer(&paths[2])?;
    w.write_record(["chain", "draw", "block", "t", "doy", "value"])?;
    for (c, chain) in draws.chains.iter().enumerate() {
        for (k, d) in chain.iter().enumerate() {
            for (block, bd) in Block::ALL.iter().zip(&d.blocks) {
                let keys = temporal_keys(variant, *block, meta);
                for ((t, doy), v) in keys.iter().zip(&bd.temporal) {
                    w.write_record([c.to_string(), k.to_string(), block.label().to_string(), t.to_string(), doy.to_string(), fmt(*v)])?;
                }
            }
        }
    }
    w.flush()?;

    let mut w = draws_writer(&paths[3])?;
    w.write_record(["chain", "draw", "t", "doy", "site", "value"])?;
    for (c, chain) in draws.chains.iter().enumerate() {
        for (k, d) in chain.iter().enumerate() {
            for (block, bd) in Block::ALL.iter().zip(&d.blocks) {
                let keys = surface_keys(variant, *block, meta);
                for ((t, doy), surface) in keys.iter().zip(&bd.surfaces) {
                    for (site, v) in meta.sites.iter().zip(surface) {
                        w.write_record([c.to_string(), k.to_string(), t.to_string(), doy.to_string(), site.id.clone(), fmt(*v)])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(paths.to_vec())
}

/// `(t, doy)` labels of a block's temporal means.
fn temporal_keys(variant: Variant, block: Block, meta: &DrawsMeta) -> Vec<(usize, usize)> {
    match variant {
        Variant::M3 => (2..=meta.years).map(|t| (t, 0)).collect(),
        Variant::M4 | Variant::M5 => group_days(block, meta.years, meta.days),
        _ => Vec::new(),
    }
}

/// `(t, doy)` labels of a block's surfaces.
fn surface_keys(variant: Variant, block: Block, meta: &DrawsMeta) -> Vec<(usize, usize)> {
    match variant {
        Variant::M2 | Variant::M3 | Variant::M4 => vec![(0, block_code(block))],
        Variant::M5 => group_days(block, meta.years, meta.days),
        _ => Vec::new(),
    }
}

fn read_draws_csv(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let mut f = BufReader::new(File::open(path)?);
    let mut first = String::new();
    f.read_line(&mut first)?;
    if first.trim_end() != DRAWS_HEADER {
        return Err(format_err(
            path,
            format!("expected header {DRAWS_HEADER:?}, found {:?}", first.trim_end()),
        ));
    }
    Ok(csv::ReaderBuilder::new().from_reader(f))
}

fn parse_f64(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_err(path, line + 1, format!("bad value {s:?}")))
}

fn parse_usize(path: &Path, line: u64, s: &str) -> Result<usize> {
    s.parse().map_err(|_| parse_err(path, line + 1, format!("bad index {s:?}")))
}

/// Loads draws written by [`persist_draws`].
pub fn load_draws(dir: &Path) -> Result<PosteriorDraws> {
    let meta_path = dir.join("meta.json");
    let mf: MetaFile = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| format_err(&meta_path, e.to_string()))?;
    if format!("# {}", mf.format) != DRAWS_HEADER {
        return Err(format_err(&meta_path, format!("unsupported format {:?}", mf.format)));
    }
    let meta = mf.meta;
    let variant = meta.variant;
    let n_chains = meta.stats.len();
    let kept = meta.spec.kept();
    let n_sites = meta.sites.len();
    let template = Draw {
        blocks: Block::ALL
            .iter()
            .map(|b| BlockDraw {
                beta: if variant == Variant::M0 { Vec::new() } else { vec![0.0; b.dim() - variant.first_column()] },
                temporal: vec![0.0; temporal_keys(variant, *b, &meta).len()],
                surfaces: vec![vec![0.0; n_sites]; surface_keys(variant, *b, &meta).len()],
                ..Default::default()
            })
            .collect(),
        phi0: 0.0,
    };
    let template = if variant == Variant::M0 { Draw::default() } else { template };
    let mut chains = vec![vec![template; kept]; n_chains];
    let mut filled = vec![vec![0usize; kept]; n_chains];
    let slot = |path: &Path, line: u64, c: &str, k: &str| -> Result<(usize, usize)> {
        let c = parse_usize(path, line, c)?;
        let k = parse_usize(path, line, k)?;
        if c >= n_chains || k >= kept {
            return Err(parse_err(path, line + 1, format!("chain {c}, draw {k} outside the stored run")));
        }
        Ok((c, k))
    };

    let p = dir.join("draws.csv");
    let mut rdr = read_draws_csv(&p)?;
    for rec in rdr.records() {
        let r = rec.map_err(|e| format_err(&p, e.to_string()))?;
        let line = line_of(&r);
        let (c, k) = slot(&p, line, &r[1], &r[2])?;
        let v = parse_f64(&p, line, &r[3])?;
        chains[c][k]
            .set_scalar(variant, &r[0], v)
            .map_err(|_| parse_err(&p, line + 1, format!("unknown parameter {:?}", &r[0])))?;
        filled[c][k] += 1;
    }
    let scalars_per_draw = chains[0].first().map_or(0, |d| d.scalars(variant).len());

    let p = dir.join("daily_means.csv");
    let mut rdr = read_draws_csv(&p)?;
    let mut n_temporal = 0usize;
    let key_maps: Vec<HashMap<(usize, usize), usize>> = Block::ALL
        .iter()
        .map(|b| temporal_keys(variant, *b, &meta).into_iter().enumerate().map(|(i, k)| (k, i)).collect())
        .collect();
    for rec in rdr.records() {
        let r = rec.map_err(|e| format_err(&p, e.to_string()))?;
        let line = line_of(&r);
        let (c, k) = slot(&p, line, &r[0], &r[1])?;
        let b = Block::ALL
            .iter()
            .position(|b| b.label() == &r[2])
            .ok_or_else(|| parse_err(&p, line + 1, format!("unknown block {:?}", &r[2])))?;
        let key = (parse_usize(&p, line, &r[3])?, parse_usize(&p, line, &r[4])?);
        let i = *key_maps[b]
            .get(&key)
            .ok_or_else(|| parse_err(&p, line + 1, format!("no temporal mean at {key:?}")))?;
        chains[c][k].blocks[b].temporal[i] = parse_f64(&p, line, &r[5])?;
        n_temporal += 1;
    }

    let p = dir.join("w.csv");
    let mut rdr = read_draws_csv(&p)?;
    let site_index: HashMap<&str, usize> = meta.sites.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let surface_maps: Vec<HashMap<(usize, usize), usize>> = Block::ALL
        .iter()
        .map(|b| surface_keys(variant, *b, &meta).into_iter().enumerate().map(|(i, k)| (k, i)).collect())
        .collect();
    let mut n_surface = 0usize;
    for rec in rdr.records() {
        let r = rec.map_err(|e| format_err(&p, e.to_string()))?;
        let line = line_of(&r);
        let (c, k) = slot(&p, line, &r[0], &r[1])?;
        let key = (parse_usize(&p, line, &r[2])?, parse_usize(&p, line, &r[3])?);
        let b = if variant == Variant::M5 { block_code(Block::of_day(key.1)) } else { key.1.min(3) };
        let i = surface_maps
            .get(b)
            .and_then(|m| m.get(&key))
            .ok_or_else(|| parse_err(&p, line + 1, format!("no surface at {key:?}")))?;
        let s = *site_index
            .get(&r[4])
            .ok_or_else(|| parse_err(&p, line + 1, format!("unknown site {:?}", &r[4])))?;
        chains[c][k].blocks[b].surfaces[*i][s] = parse_f64(&p, line, &r[5])?;
        n_surface += 1;
    }

    let draws_total = n_chains * kept;
    let want_temporal: usize = Block::ALL.iter().map(|b| temporal_keys(variant, *b, &meta).len()).sum::<usize>() * draws_total;
    let want_surface: usize =
        Block::ALL.iter().map(|b| surface_keys(variant, *b, &meta).len()).sum::<usize>() * n_sites * draws_total;
    if filled.iter().flatten().any(|&n| n != scalars_per_draw) || n_temporal != want_temporal || n_surface != want_surface {
        return Err(format_err(dir, "draw files are truncated or inconsistent with meta.json"));
    }
    Ok(PosteriorDraws { meta, chains })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileHash {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to rerun a command. Timing and thread count go to a
/// separate `timing.json` so that the manifest itself is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub chain_stats: Vec<crate::mcmc::ChainStats>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            chain_stats: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileHash::of(path)?);
        Ok(())
    }

    /// Hashes outputs (paths stored relative to `dir`) and writes `manifest.json`.
    pub fn write(mut self, dir: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        for p in outputs {
            let mut h = FileHash::of(p)?;
            h.path = p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.clone());
            self.outputs.push(h);
        }
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| format_err(path, e.to_string()))
    }

    /// Re-hashes the recorded inputs and outputs; returns the mismatching paths.
    pub fn verify(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for h in &self.inputs {
            if sha256_file(&h.path)? != h.sha256 {
                bad.push(h.path.clone());
            }
        }
        for h in &self.outputs {
            if sha256_file(&dir.join(&h.path))? != h.sha256 {
                bad.push(h.path.clone());
            }
        }
        Ok(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub threads: usize,
    pub chain_seconds: Vec<f64>,
}

pub fn write_timing(dir: &Path, timing: &Timing) -> Result<()> {
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(timing)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn toy_panel_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let st = write(dir.path(), "st.csv", "site,x_km,y_km,dist_coast_km\nA,0,0,12.5\n");
        let mut body = String::from("site,year,doy,tmax_c\n");
        for y in [1990, 1991] {
            for d in 1..=365 {
                body.push_str(&format!("A,{y},{d},{}\n", 20.0 + (d % 7) as f64));
            }
        }
        body.push_str("A,1990,5,\n".replace("5", "400").as_str());
        let tp = write(dir.path(), "t.csv", &body);
        let err = ingest(&tp, &st).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 732, .. }), "{err:?}");
        body.truncate(body.len() - "A,1990,400,\n".len());
        let tp = write(dir.path(), "t.csv", &body);
        let got = ingest(&tp, &st).unwrap();
        assert_eq!((got.panel.n_sites(), got.panel.years(), got.panel.days()), (1, 2, 365));
        assert_eq!(got.first_year, 1990);
    }

    #[test]
    fn dated_rows_drop_feb29() {
        let dir = tempfile::tempdir().unwrap();
        let st = write(dir.path(), "st.csv", "site,x_km,y_km,dist_coast_km\nA,0,0,1\n");
        let tp = write(
            dir.path(),
            "t.csv",
            "site,date,tmax_c\nA,2000-02-28,10\nA,2000-02-29,11\nA,2000-03-01,12\nA,2001-03-01,\n",
        );
        let got = ingest(&tp, &st).unwrap();
        assert_eq!(got.dropped_feb29, 1);
        assert_eq!(got.panel.get(0, 1, 60), 12.0);
        assert_eq!(got.panel.get(0, 2, 60), MISSING);
    }

    #[test]
    fn duplicate_and_unknown_rows() {
        let dir = tempfile::tempdir().unwrap();
        let st = write(dir.path(), "st.csv", "site,x_km,y_km,dist_coast_km\nA,0,0,1\n");
        let tp = write(dir.path(), "t.csv", "site,year,doy,tmax_c\nA,2000,1,3\nA,2001,1,3\nA,2000,1,4\n");
        let e = ingest(&tp, &st).unwrap_err().to_string();
        assert!(e.contains(":4:") && e.contains("duplicate"), "{e}");
        let tp = write(dir.path(), "t.csv", "site,year,doy,tmax_c\nB,2000,1,3\n");
        assert!(ingest(&tp, &st).unwrap_err().to_string().contains("unknown site"));
        let tp = write(dir.path(), "t.csv", "site,year,doy,tmax_c\nA,2000,366,3\n");
        assert!(ingest(&tp, &st).is_err());
    }

    #[test]
    fn indicator_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sites = vec![Site::new("a", 0.0, 0.0, 1.0), Site::new("b", 1.0, 0.0, 2.0)];
        let tensor = RecordTensor::from_fn(2, 3, 4, |s, t, d| match (s + t + d) % 3 {
            0 => Indicator::Record,
            1 => Indicator::NotRecord,
            _ if t > 1 => Indicator::Tied(2),
            _ => Indicator::Record,
        });
        let p = dir.path().join("ind.csv");
        write_indicators(&p, &tensor, &sites, 1961).unwrap();
        let (back, first) = read_indicators(&p, &sites).unwrap();
        assert_eq!(back, tensor);
        assert_eq!(first, 1961);
    }

    #[test]
    fn manifest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let input = write(dir.path(), "in.txt", "abc");
        let out = write(dir.path(), "out.txt", "x");
        let mut m = RunManifest::new("test", Some(7), serde_json::json!({"k": 1}));
        m.add_input(&input).unwrap();
        let mp = m.write(dir.path(), &[out.clone()]).unwrap();
        let m = RunManifest::read(&mp).unwrap();
        assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert!(m.verify(dir.path()).unwrap().is_empty());
        fs::write(&out, "y").unwrap();
        assert_eq!(m.verify(dir.path()).unwrap().len(), 1);
    }
}
