//! CSV, PGM and metadata writers.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::silc::{History, LayerRecord, Region};

/// Crate version recorded in output metadata.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Decimal scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A `rows,cols` line followed by one CSV row per matrix row.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = format!("{},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Inverse of [`matrix_csv`].
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty matrix file".into() })?;
    let dims: Vec<usize> = head.split(',').map(|t| t.trim().parse()).collect::<std::result::Result<_, _>>().map_err(
        |_| Error::Parse { line: 1, msg: format!("expected `rows,cols`, found {head:?}") },
    )?;
    let &[rows, cols] = dims.as_slice() else {
        return Err(Error::Parse { line: 1, msg: format!("expected `rows,cols`, found {head:?}") });
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse { line: i + 1, msg: "not a number".into() })?;
        if vals.len() != cols {
            return Err(Error::Parse { line: i + 1, msg: format!("expected {cols} values, found {}", vals.len()) });
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse { line: text.lines().count(), msg: format!("expected {rows} rows") });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// One sequence value per line under a header.
pub fn sequence_csv(header: &str, seq: &[f64]) -> String {
    let mut s = format!("{header}\n");
    for (k, v) in seq.iter().enumerate() {
        writeln!(s, "{k},{}", fmt17(*v)).unwrap();
    }
    s
}

/// Rows `layer,voxel_id,vx,vy,u_s,y_s,e_s`.
pub fn history_csv(h: &History) -> String {
    let mut s = String::from("layer,voxel_id,vx,vy,u_s,y_s,e_s\n");
    for r in &h.layers {
        for (i, v) in r.voxels.iter().enumerate() {
            let (vx, vy) = r.coords[i];
            let e = r.e_s.get(i).copied().unwrap_or(0.0);
            writeln!(s, "{},{},{vx},{vy},{},{},{}", r.layer, v.0, fmt17(r.u_s[i]), fmt17(r.y_s[i]), fmt17(e)).unwrap();
        }
    }
    s
}

/// Per-layer error statistics and region means. Empty regions leave their
/// fields blank.
pub fn summary_csv(h: &History) -> String {
    let mut s = String::from("layer,angle_deg,n_t,voxels,controlled,mean_abs_e,max_abs_e");
    for r in [Region::Center, Region::Edge, Region::Corner] {
        let n = r.name();
        write!(s, ",{n}_voxels,{n}_y,{n}_u,{n}_abs_e").unwrap();
    }
    s.push('\n');
    for r in &h.layers {
        let abs: Vec<f64> = r.e_s.iter().map(|e| e.abs()).collect();
        let mean = if abs.is_empty() { 0.0 } else { abs.iter().sum::<f64>() / abs.len() as f64 };
        let max = abs.iter().copied().fold(0.0, f64::max);
        write!(
            s,
            "{},{},{},{},{},{},{}",
            r.layer,
            fmt17(r.angle_deg),
            r.n_t,
            r.voxels.len(),
            r.controlled,
            fmt17(mean),
            fmt17(max)
        )
        .unwrap();
        for region in [Region::Center, Region::Edge, Region::Corner] {
            let count = (0..r.voxels.len()).filter(|&i| r.region(i) == region).count();
            match r.region_means(region) {
                Some((y, u, e)) => write!(s, ",{count},{},{},{}", fmt17(y), fmt17(u), fmt17(e)).unwrap(),
                None => s.push_str(",0,,,"),
            }
        }
        s.push('\n');
    }
    s
}

/// Binary P5 map of `y_s` over an `m1 x m2` voxel grid, min-max scaled to
/// 0..=255 across the layer's voxels. Voxels without output are black.
/// Row 1 of the image is `vy = m2`. Returns the image and the `(min, max)`
/// scale.
pub fn layer_pgm(r: &LayerRecord, m1: usize, m2: usize) -> Result<(Vec<u8>, f64, f64)> {
    let (lo, hi) = r.y_s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let (lo, hi) = if r.y_s.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let mut px = vec![0u8; m1 * m2];
    for (i, &(vx, vy)) in r.coords.iter().enumerate() {
        if vx == 0 || vy == 0 || vx > m1 || vy > m2 {
            return Err(Error::Range(format!("voxel ({vx},{vy}) outside {m1}x{m2}")));
        }
        let level = if hi > lo { (r.y_s[i] - lo) / (hi - lo) * 255.0 } else { 255.0 };
        px[(vx - 1) + (m2 - vy) * m1] = level.round() as u8;
    }
    let mut out = format!("P5\n{m1} {m2}\n255\n").into_bytes();
    out.extend(px);
    Ok((out, lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VoxelId;
    use nalgebra::DVector;

    fn record() -> LayerRecord {
        LayerRecord {
            layer: 3,
            angle_deg: 90.0,
            n_t: 5,
            voxels: vec![VoxelId(1), VoxelId(2), VoxelId(4)],
            coords: vec![(1, 1), (2, 1), (2, 2)],
            flags: vec![(false, false), (true, false), (true, true)],
            u_s: DVector::from_vec(vec![250.0, 240.0, 230.0]),
            y_s: DVector::from_vec(vec![10.0, 20.0, 30.0]),
            e_s: DVector::from_vec(vec![5.0, -5.0, -15.0]),
            controlled: true,
        }
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(s.trim_start_matches('-').split('e').next().unwrap().len(), 18);
        }
    }

    #[test]
    fn matrix_csv_round_trips() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 7.0));
        let text = matrix_csv(&m);
        assert!(text.starts_with("3,2\n"));
        assert_eq!(parse_matrix_csv(&text).unwrap(), m);
        assert!(parse_matrix_csv("2,2\n1,2\n").is_err());
    }

    #[test]
    fn history_and_summary_rows() {
        let h = History { reference: 15.0, layers: vec![record()] };
        let csv = history_csv(&h);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "layer,voxel_id,vx,vy,u_s,y_s,e_s");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("3,4,2,2,"));
        let sum = summary_csv(&h);
        let row: Vec<&str> = sum.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5].parse::<f64>().unwrap(), 25.0 / 3.0);
        assert_eq!(row[6].parse::<f64>().unwrap(), 15.0);
        assert_eq!(row[7], "1");
        assert_eq!(row[16].parse::<f64>().unwrap(), 30.0);
        assert_eq!(row[18].parse::<f64>().unwrap(), 15.0);
    }

    #[test]
    fn pgm_is_min_max_scaled() {
        let (img, lo, hi) = layer_pgm(&record(), 2, 2).unwrap();
        assert_eq!((lo, hi), (10.0, 30.0));
        let head = b"P5\n2 2\n255\n";
        assert_eq!(&img[..head.len()], head);
        // Top row is vy = 2.
        assert_eq!(&img[head.len()..], &[0, 255, 0, 128]);
        assert!(layer_pgm(&record(), 1, 2).is_err());
    }
}
