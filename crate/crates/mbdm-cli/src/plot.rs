//! Scatter plots over a rasterized constraint mask, written as binary PPM
//! (no compression, no anti-aliasing: one sample, one pixel).

use std::path::Path;

use mbdm_core::bridge::BridgeSet;
use mbdm_core::config::{DataContext, Resolved};
use mbdm_core::error::{Error, Result};
use mbdm_core::io::SampleCsv;
use mbdm_core::Scalar;

const VALID_POINT: [u8; 3] = [31, 99, 173];
const INVALID_POINT: [u8; 3] = [150, 75, 0];
const MASK_SHADE: [u8; 3] = [222, 226, 230];
const BACKGROUND: [u8; 3] = [255, 255, 255];

pub fn render(
    samples: &SampleCsv<Scalar>,
    bridges: &BridgeSet<Scalar>,
    resolved: &Resolved<Scalar>,
    out: &Path,
    width: usize,
    height: usize,
    bounds: Option<&str>,
) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::config("image dimensions must be positive"));
    }
    let d = samples.points.cols().max(2);
    let (xmin, xmax, ymin, ymax) = resolve_bounds(samples, resolved, bounds)?;

    let mut pixels = vec![0u8; width * height * 3];
    // Constraint mask is only meaningful when the constraints live in the
    // plotted plane.
    let mask = d == 2 && !bridges.is_empty();
    for py in 0..height {
        for px in 0..width {
            let color = if mask {
                let x = xmin + (xmax - xmin) * (px as f64 + 0.5) / width as f64;
                let y = ymax - (ymax - ymin) * (py as f64 + 0.5) / height as f64;
                if bridges.member_all(&[x, y]) {
                    MASK_SHADE
                } else {
                    BACKGROUND
                }
            } else {
                BACKGROUND
            };
            pixels[(py * width + px) * 3..][..3].copy_from_slice(&color);
        }
    }

    for i in 0..samples.points.rows() {
        let row = samples.points.row(i);
        let (x, y) = (row[0], row[1]);
        if !(xmin..=xmax).contains(&x) || !(ymin..=ymax).contains(&y) {
            continue;
        }
        let px = (((x - xmin) / (xmax - xmin)) * width as f64) as usize;
        let py = (((ymax - y) / (ymax - ymin)) * height as f64) as usize;
        let (px, py) = (px.min(width - 1), py.min(height - 1));
        let color = if samples.valid[i] {
            VALID_POINT
        } else {
            INVALID_POINT
        };
        pixels[(py * width + px) * 3..][..3].copy_from_slice(&color);
    }

    let mut header = format!("P6\n# mbdm plot: dims (0,1) of {}\n", samples.points.cols());
    header.push_str(&format!("{width} {height}\n255\n"));
    let mut file = header.into_bytes();
    file.extend_from_slice(&pixels);
    std::fs::write(out, file)?;
    Ok(())
}

fn resolve_bounds(
    samples: &SampleCsv<Scalar>,
    resolved: &Resolved<Scalar>,
    bounds: Option<&str>,
) -> Result<(f64, f64, f64, f64)> {
    if let Some(spec) = bounds {
        let parts: Vec<f64> = spec
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(format!("bad bounds '{spec}'")))?;
        if parts.len() != 4 || parts[0] >= parts[1] || parts[2] >= parts[3] {
            return Err(Error::config("bounds must be xmin,xmax,ymin,ymax"));
        }
        return Ok((parts[0], parts[1], parts[2], parts[3]));
    }
    // Checkerboard runs get the board with a margin; otherwise pad the
    // sample extent (or fall back to a unit window for empty input).
    if matches!(resolved.context, DataContext::Checkerboard) {
        return Ok((-2.5, 2.5, -2.5, 2.5));
    }
    let pts = &samples.points;
    if pts.rows() == 0 {
        return Ok((-1.5, 1.5, -1.5, 1.5));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..pts.rows() {
        for k in 0..2 {
            lo[k] = lo[k].min(pts.row(i)[k]);
            hi[k] = hi[k].max(pts.row(i)[k]);
        }
    }
    let pad = |l: f64, h: f64| {
        let w = (h - l).max(1e-9);
        (l - 0.1 * w, h + 0.1 * w)
    };
    let (xmin, xmax) = pad(lo[0], hi[0]);
    let (ymin, ymax) = pad(lo[1], hi[1]);
    Ok((xmin, xmax, ymin, ymax))
}
