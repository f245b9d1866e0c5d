//! Plot-ready CSV emission for paths and noise bundles.
//!
//! Schemas (headers included, values in shortest-round-trip decimal):
//!
//! - vector path: `time,coord_0,...,coord_{d-1}`
//! - real path: `time,value`
//! - bundle: `interval_index,coordinate,increment`
//!
//! Writers take `io::Write`, so callers can target files, buffers or pipes; output is
//! deterministic byte-for-byte given the same data.

use std::io::{self, Write};

use crate::noise::NoisePathBundle;
use crate::path::{GridPath, RealGridPath};
use crate::real::Real;

/// Shortest decimal that round-trips the value (Rust's default float `Display`).
fn fmt<T: Real>(x: T) -> String {
    format!("{}", x.lossy())
}

/// Write a vector-valued path as `time,coord_0,...,coord_{d-1}` rows.
pub fn write_grid_path_csv<T: Real, W: Write>(out: &mut W, path: &GridPath<T>) -> io::Result<()> {
    write!(out, "time")?;
    for k in 0..path.dim() {
        write!(out, ",coord_{k}")?;
    }
    writeln!(out)?;
    for (j, value) in path.values().iter().enumerate() {
        write!(out, "{}", fmt(path.grid().time(j)))?;
        for k in 0..path.dim() {
            write!(out, ",{}", fmt(value.get(k)))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Write a real-valued path as `time,value` rows.
pub fn write_real_path_csv<T: Real, W: Write>(
    out: &mut W,
    path: &RealGridPath<T>,
) -> io::Result<()> {
    writeln!(out, "time,value")?;
    for (j, &value) in path.values().iter().enumerate() {
        writeln!(out, "{},{}", fmt(path.grid().time(j)), fmt(value))?;
    }
    Ok(())
}

/// Write sampled noise increments as `interval_index,coordinate,increment` rows.
pub fn write_bundle_csv<T: Real, W: Write>(
    out: &mut W,
    bundle: &NoisePathBundle<T>,
) -> io::Result<()> {
    writeln!(out, "interval_index,coordinate,increment")?;
    for i in 0..bundle.n_intervals() {
        for (k, &inc) in bundle.increment_row(i).iter().enumerate() {
            writeln!(out, "{i},{k},{}", fmt(inc))?;
        }
    }
    Ok(())
}
