//! Test vectors and the plain-text vector file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};

/// Generator for stream `stream` under `seed`. ChaCha is counter based, so
/// every stream is reproducible independently of the others.
pub fn generator(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Entries drawn uniformly from (-1, 1), scaled to unit l2 norm.
pub fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n)
        .map(|_| loop {
            let x = rng.random_range(-1.0..1.0);
            if x != -1.0 {
                break x;
            }
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn parse_vector(text: &str, path: &Path) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| CliError::VectorFile {
            path: path.to_path_buf(),
            line: i + 1,
            reason: format!("not a number: {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(CliError::VectorFile {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "value is not finite".into(),
            });
        }
        out.push(value);
    }
    Ok(out)
}

pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_vector(&text, path)
}

/// Shortest representation that parses back to the same bits.
pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        writeln!(s, "{x:e}").expect("writing to a string");
    }
    s
}

pub fn write_vector(path: &Path, v: &[f64]) -> CliResult<()> {
    fs::write(path, format_vector(v)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vectors_are_reproducible() {
        let a = unit_vector(100, &mut generator(7, 3));
        let b = unit_vector(100, &mut generator(7, 3));
        assert_eq!(a, b);
        assert_ne!(a, unit_vector(100, &mut generator(7, 4)));
        let norm: f64 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        assert!(a.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let v = vec![0.1, -1.0 / 3.0, 1e-300, 5e-324, 0.0, 12345.678];
        let back = parse_vector(&format_vector(&v), Path::new("v")).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn bad_lines_are_reported() {
        let err = parse_vector("1.0\n\nabc\n", Path::new("v.txt")).unwrap_err();
        assert!(err.to_string().contains("v.txt:3"), "{err}");
        assert!(parse_vector("inf\n", Path::new("v")).is_err());
    }
}
