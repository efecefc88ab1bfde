//! Versioned snapshot (CSV or binary) and checkpoint files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ParticleCloud, SimulationState, Vec2};
use crate::point_vortex::fmt_f64;
use crate::sim::RunConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VXSNAP\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Binary,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Binary => "bin",
        }
    }
}

fn fmt_err(msg: impl Into<String>) -> VortexError {
    VortexError::Format(msg.into())
}

/// Header comment with metadata, then `cloud_id,gamma,x,y` rows. Values are
/// written with 17 significant digits so they read back bit-exactly.
pub fn write_snapshot_csv<W: Write>(mut w: W, state: &SimulationState, step: u64) -> Result<()> {
    let blobs: Vec<String> = state.clouds.iter().map(|c| fmt_f64(c.blob_radius)).collect();
    writeln!(
        w,
        "# format_version={} time={} step={} clouds={} blob_radius={}",
        FORMAT_VERSION,
        fmt_f64(state.time),
        step,
        state.clouds.len(),
        blobs.join(";")
    )?;
    writeln!(w, "cloud_id,gamma,x,y")?;
    for (id, c) in state.clouds.iter().enumerate() {
        for (p, g) in c.positions.iter().zip(&c.strengths) {
            writeln!(w, "{id},{},{},{}", fmt_f64(*g), fmt_f64(p.x), fmt_f64(p.y))?;
        }
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| fmt_err(format!("bad number {s:?}")))
}

pub fn read_snapshot_csv<R: BufRead>(r: R) -> Result<(SimulationState, u64)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| fmt_err("empty snapshot"))??;
    let meta = header
        .strip_prefix('#')
        .ok_or_else(|| fmt_err("missing metadata line"))?;
    let (mut version, mut time, mut step, mut count, mut blobs) = (None, None, None, None, None);
    for item in meta.split_whitespace() {
        let (k, v) = item.split_once('=').ok_or_else(|| fmt_err(format!("bad metadata {item:?}")))?;
        match k {
            "format_version" => version = v.parse::<u32>().ok(),
            "time" => time = Some(parse_f64(v)?),
            "step" => step = v.parse::<u64>().ok(),
            "clouds" => count = v.parse::<usize>().ok(),
            "blob_radius" => {
                blobs = Some(v.split(';').map(parse_f64).collect::<Result<Vec<f64>>>()?);
            }
            _ => {}
        }
    }
    match version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(fmt_err(format!("unsupported snapshot format_version {v}"))),
        None => return Err(fmt_err("missing format_version")),
    }
    let time = time.ok_or_else(|| fmt_err("missing time"))?;
    let step = step.ok_or_else(|| fmt_err("missing step"))?;
    let count = count.ok_or_else(|| fmt_err("missing clouds"))?;
    let blobs = blobs.ok_or_else(|| fmt_err("missing blob_radius"))?;
    if blobs.len() != count {
        return Err(fmt_err("blob_radius list does not match cloud count"));
    }
    let columns = lines.next().ok_or_else(|| fmt_err("missing column header"))??;
    if columns.trim() != "cloud_id,gamma,x,y" {
        return Err(fmt_err(format!("unexpected columns {columns:?}")));
    }
    let mut pos = vec![Vec::new(); count];
    let mut gam = vec![Vec::new(); count];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(fmt_err(format!("expected 4 fields in {line:?}")));
        }
        let id: usize = f[0].trim().parse().map_err(|_| fmt_err(format!("bad cloud id {:?}", f[0])))?;
        if id >= count {
            return Err(fmt_err(format!("cloud id {id} out of range")));
        }
        gam[id].push(parse_f64(f[1])?);
        pos[id].push(Vec2::new(parse_f64(f[2])?, parse_f64(f[3])?));
    }
    let clouds = pos
        .into_iter()
        .zip(gam)
        .zip(blobs)
        .map(|((p, g), d)| ParticleCloud::new(p, g, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((SimulationState { clouds, time }, step))
}

/// Little-endian layout: magic, version (u32), step (u64), time (f64),
/// cloud count (u32), then per cloud: particle count (u64), blob radius
/// (f64) and `gamma, x, y` triples.
pub fn write_snapshot_binary<W: Write>(mut w: W, state: &SimulationState, step: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    w.write_all(&state.time.to_le_bytes())?;
    w.write_all(&(state.clouds.len() as u32).to_le_bytes())?;
    for c in &state.clouds {
        w.write_all(&(c.len() as u64).to_le_bytes())?;
        w.write_all(&c.blob_radius.to_le_bytes())?;
        for (p, g) in c.positions.iter().zip(&c.strengths) {
            for v in [*g, p.x, p.y] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => fmt_err("truncated snapshot"),
        _ => e.into(),
    })?;
    Ok(b)
}

pub fn read_snapshot_binary<R: Read>(mut r: R) -> Result<(SimulationState, u64)> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(fmt_err("not a binary snapshot"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(fmt_err(format!("unsupported snapshot format_version {version}")));
    }
    let f64_of = |r: &mut R| -> Result<f64> { Ok(f64::from_le_bytes(read_array(r)?)) };
    let step = u64::from_le_bytes(read_array(&mut r)?);
    let time = f64_of(&mut r)?;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut clouds = Vec::with_capacity(count);
    for _ in 0..count {
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let blob = f64_of(&mut r)?;
        let mut p = Vec::with_capacity(n.min(1 << 24));
        let mut g = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            g.push(f64_of(&mut r)?);
            let x = f64_of(&mut r)?;
            let y = f64_of(&mut r)?;
            p.push(Vec2::new(x, y));
        }
        clouds.push(ParticleCloud::new(p, g, blob)?);
    }
    Ok((SimulationState { clouds, time }, step))
}

pub fn write_snapshot(path: &Path, state: &SimulationState, step: u64, format: SnapshotFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match format {
        SnapshotFormat::Csv => write_snapshot_csv(&mut w, state, step)?,
        SnapshotFormat::Binary => write_snapshot_binary(&mut w, state, step)?,
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, recognising binary files by their magic bytes.
pub fn read_snapshot(path: &Path) -> Result<(SimulationState, u64)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let head = r.fill_buf()?;
    if head.starts_with(MAGIC) {
        read_snapshot_binary(r)
    } else {
        read_snapshot_csv(r)
    }
}

/// JSON sidecar describing a resumable point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: u64,
    pub time: f64,
    /// Snapshot file name, relative to the sidecar's directory.
    pub snapshot: String,
    pub snapshot_format: SnapshotFormat,
    pub config: RunConfig,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Writes `checkpoint.{csv,bin}` and `checkpoint.json` in `dir`, each via a
/// temporary file and rename so a crash never leaves a torn checkpoint.
pub fn write_checkpoint(
    dir: &Path,
    config: &RunConfig,
    state: &SimulationState,
    step: u64,
    format: SnapshotFormat,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let snap_name = format!("checkpoint.{}", format.extension());
    let snap_tmp = dir.join(format!("{snap_name}.tmp"));
    write_snapshot(&snap_tmp, state, step, format)?;
    fs::rename(&snap_tmp, dir.join(&snap_name))?;
    let ck = Checkpoint {
        format_version: FORMAT_VERSION,
        step,
        time: state.time,
        snapshot: snap_name,
        snapshot_format: format,
        config: config.clone(),
    };
    let path = dir.join(CHECKPOINT_FILE);
    let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_string_pretty(&ck)?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads a checkpoint sidecar (or a directory containing one) and its state.
pub fn read_checkpoint(path: &Path) -> Result<(Checkpoint, SimulationState)> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(&file)?)?;
    if ck.format_version != FORMAT_VERSION {
        return Err(fmt_err(format!("unsupported checkpoint format_version {}", ck.format_version)));
    }
    let dir = file.parent().unwrap_or(Path::new("."));
    let (state, step) = read_snapshot(&dir.join(&ck.snapshot))?;
    if step != ck.step || state.time.to_bits() != ck.time.to_bits() {
        return Err(fmt_err("checkpoint sidecar does not match its snapshot"));
    }
    Ok((ck, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_lab::expanding_triple;
    use crate::sim::initial_state;

    fn state() -> SimulationState {
        let mut c = RunConfig::new(expanding_triple(), 100.0, 200.0, 1.0, 37);
        c.blob_radius = Some(0.0123);
        let mut s = initial_state(&c).unwrap();
        s.time = 1.0 / 3.0 + 100.0;
        s
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = state();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &s, 42).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# format_version=1 "));
        assert_eq!(text.lines().nth(1), Some("cloud_id,gamma,x,y"));
        let (back, step) = read_snapshot_csv(&buf[..]).unwrap();
        assert_eq!(step, 42);
        assert_eq!(back, s);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let s = state();
        let mut buf = Vec::new();
        write_snapshot_binary(&mut buf, &s, 7).unwrap();
        let (back, step) = read_snapshot_binary(&buf[..]).unwrap();
        assert_eq!(step, 7);
        assert_eq!(back, s);
        assert!(read_snapshot_binary(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn rejects_other_versions() {
        let s = state();
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &s, 0).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("format_version=1", "format_version=9", 1);
        assert!(matches!(read_snapshot_csv(text.as_bytes()), Err(VortexError::Format(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(expanding_triple(), 100.0, 200.0, 1.0, 37);
        c.blob_radius = Some(0.0123);
        let s = state();
        for format in [SnapshotFormat::Csv, SnapshotFormat::Binary] {
            write_checkpoint(dir.path(), &c, &s, 5, format).unwrap();
            let (ck, back) = read_checkpoint(dir.path()).unwrap();
            assert_eq!(ck.config, c);
            assert_eq!(ck.step, 5);
            assert_eq!(back, s);
        }
    }
}
