use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::GridPoint;
use super::{BenchError, BenchSample, SampleKind};

#[derive(Serialize, Deserialize)]
struct SampleRow {
    cycle: u64,
    x: f64,
    y_ms: f64,
    kind: SampleKind,
}

#[derive(Serialize)]
struct OpCountRow {
    cycle: u64,
    x: f64,
    hash_ops: u64,
    kind: SampleKind,
}

/// `cycle,x,y_ms,kind`
pub fn write_samples_csv(path: &Path, samples: &[BenchSample]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(SampleRow {
            cycle: s.cycle,
            x: s.x,
            y_ms: s.y_ms,
            kind: s.kind,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<BenchSample>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<SampleRow>()
        .map(|row| {
            let row = row?;
            Ok(BenchSample {
                cycle: row.cycle,
                x: row.x,
                y_ms: row.y_ms,
                kind: row.kind,
                hash_ops: 0,
            })
        })
        .collect()
}

/// `cycle,x,hash_ops,kind`: the hardware-independent counterpart of the
/// sample CSV.
pub fn write_op_counts_csv(path: &Path, samples: &[BenchSample]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(OpCountRow {
            cycle: s.cycle,
            x: s.x,
            hash_ops: s.hash_ops,
            kind: s.kind,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `lambda,T_p,R_pr_ms`
pub fn write_grid_csv(path: &Path, grid: &[GridPoint]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in grid {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script drawing the grid CSV as a surface.
pub fn gnuplot_script(grid_csv: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set title '{title}'\n\
         set xlabel 'lambda (tx/s)'\n\
         set ylabel 'T_p (s)'\n\
         set zlabel 'R_pr (ms)'\n\
         set dgrid3d 30,30\n\
         set hidden3d\n\
         splot '{grid_csv}' using 1:2:3 every ::1 with lines title 'R_pr'\n"
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), BenchError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
