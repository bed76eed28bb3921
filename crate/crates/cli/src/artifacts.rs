//! Trajectory CSV, snapshot OBJ files and their readers.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use helflow::diagnostics::{DiagnosticsRecord, Snapshot};
use helflow::mesh::{load_surface, write_obj};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "index.csv";

const LEADING: [&str; 8] = [
    "time",
    "area",
    "volume",
    "willmore",
    "energy_total",
    "int_Ao2",
    "int_A2",
    "li_yau",
];
const TRAILING: [&str; 5] = ["roundness", "isoperimetric", "min_edge", "max_W", "event"];

/// Column names in file order for the given concentration radii.
pub fn csv_header(radii: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
    h.extend(radii.iter().map(|r| format!("eta_rho_{r}")));
    h.extend(TRAILING.iter().map(|s| s.to_string()));
    h
}

pub fn write_trajectory(path: &Path, radii: &[f64], records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(csv_header(radii))?;
    for r in records {
        let mut row = vec![
            r.time.to_string(),
            r.area.to_string(),
            r.volume.to_string(),
            r.willmore.to_string(),
            r.energy_total.to_string(),
            r.int_ao2.to_string(),
            r.int_a2.to_string(),
            u8::from(r.li_yau).to_string(),
        ];
        row.extend(r.eta.iter().map(f64::to_string));
        row.extend([
            r.roundness.to_string(),
            r.isoperimetric.to_string(),
            r.min_edge.to_string(),
            r.max_w.to_string(),
            r.event.clone(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed trajectory CSV: radii recovered from the header. The schema has
/// no step column, so `step` holds the row index.
pub struct TrajectoryTable {
    pub radii: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    ensure!(
        header.len() >= LEADING.len() + TRAILING.len() && header[..LEADING.len()] == LEADING,
        "{} does not have the trajectory schema",
        path.display()
    );
    let radii: Vec<f64> = header[LEADING.len()..]
        .iter()
        .map_while(|h| h.strip_prefix("eta_rho_"))
        .map(|r| r.parse::<f64>().with_context(|| format!("bad radius column {r:?}")))
        .collect::<Result<_>>()?;
    let tail = LEADING.len() + radii.len();
    ensure!(
        header[tail..] == TRAILING,
        "{} has unexpected trailing columns",
        path.display()
    );
    let mut records = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let num = |j: usize| -> Result<f64> {
            let cell = row.get(j).unwrap_or("");
            cell.parse::<f64>()
                .with_context(|| format!("row {}: column {} value {cell:?}", i + 1, header[j]))
        };
        let li_yau = match row.get(7) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") => false,
            other => bail!("row {}: bad li_yau value {other:?}", i + 1),
        };
        records.push(DiagnosticsRecord {
            step: i,
            time: num(0)?,
            area: num(1)?,
            volume: num(2)?,
            willmore: num(3)?,
            energy_total: num(4)?,
            int_ao2: num(5)?,
            int_a2: num(6)?,
            li_yau,
            eta: (0..radii.len()).map(|k| num(LEADING.len() + k)).collect::<Result<_>>()?,
            roundness: num(tail)?,
            isoperimetric: num(tail + 1)?,
            min_edge: num(tail + 2)?,
            max_w: num(tail + 3)?,
            event: row.get(tail + 4).unwrap_or("").to_string(),
        });
    }
    Ok(TrajectoryTable { radii, records })
}

/// Writes `snapshot_<seq>.obj` files plus an index of step and time, and
/// returns the written OBJ paths.
pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut index = csv::Writer::from_path(dir.join(SNAPSHOT_INDEX))?;
    index.write_record(["sequence", "step", "time", "file"])?;
    let mut paths = Vec::with_capacity(snapshots.len());
    for (seq, snap) in snapshots.iter().enumerate() {
        let file = format!("snapshot_{seq:05}.obj");
        let path = dir.join(&file);
        std::fs::write(&path, write_obj(&snap.surface)).with_context(|| format!("writing {}", path.display()))?;
        index.write_record([seq.to_string(), snap.step.to_string(), snap.time.to_string(), file])?;
        paths.push(path);
    }
    index.flush()?;
    Ok(paths)
}

/// Loads snapshots in sequence order. Step and time come from the index
/// when present; otherwise the sequence number stands in for both.
pub fn read_snapshots(dir: &Path) -> Result<Vec<Snapshot>> {
    let index = dir.join(SNAPSHOT_INDEX);
    let mut entries: Vec<(usize, f64, PathBuf)> = Vec::new();
    if index.is_file() {
        let mut r = csv::Reader::from_path(&index)?;
        for row in r.records() {
            let row = row?;
            let step = row.get(1).unwrap_or("").parse::<usize>()?;
            let time = row.get(2).unwrap_or("").parse::<f64>()?;
            entries.push((step, time, dir.join(row.get(3).unwrap_or(""))));
        }
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "obj"))
            .collect();
        files.sort();
        entries.extend(files.into_iter().enumerate().map(|(i, p)| (i, i as f64, p)));
    }
    entries
        .into_iter()
        .map(|(step, time, path)| {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let surface = load_surface(&text).with_context(|| format!("loading {}", path.display()))?;
            Ok(Snapshot { step, time, surface })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use helflow::analytic::AnalyticSurface;
    use helflow::diagnostics::record;
    use helflow::energy::FlowParams;

    #[test]
    fn header_order() {
        let h = csv_header(&[0.25, 1.0]);
        assert_eq!(
            h.join(","),
            "time,area,volume,willmore,energy_total,int_Ao2,int_A2,li_yau,eta_rho_0.25,eta_rho_1,\
             roundness,isoperimetric,min_edge,max_W,event"
        );
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = AnalyticSurface::sphere(1.0).sample_mesh(2).unwrap();
        let p = FlowParams::willmore(1.0, 0.5);
        let radii = [0.5, 2.0];
        let recs = vec![
            record(&s, &p, &radii, 0.0, 0, "initial").unwrap(),
            record(&s, &p, &radii, 1e-7, 1, "remesh;extinction").unwrap(),
        ];
        let path = dir.path().join("t.csv");
        write_trajectory(&path, &radii, &recs).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.radii, radii);
        assert_eq!(back.records, recs);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = AnalyticSurface::perturbed_sphere(1.0, 0.1).sample_mesh(1).unwrap();
        let snaps = vec![
            Snapshot { step: 0, time: 0.0, surface: s.clone() },
            Snapshot { step: 7, time: 0.25, surface: s.clone() },
        ];
        let paths = write_snapshots(dir.path(), &snaps).unwrap();
        assert!(paths[1].ends_with("snapshot_00001.obj"));
        let back = read_snapshots(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].step, 7);
        assert_eq!(back[1].time, 0.25);
        assert_eq!(back[1].surface.positions(), s.positions());
    }
}
