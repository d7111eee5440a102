//! Float-vector files read by `quantize`.

use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VectorFormat {
    /// Packed little-endian `f32`.
    F32,
    /// Numbers separated by commas, whitespace or newlines.
    Csv,
}

impl VectorFormat {
    /// `.csv` and `.txt` are text, anything else packed floats.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "csv" || ext == "txt" => Self::Csv,
            _ => Self::F32,
        }
    }
}

pub fn parse_vector(bytes: &[u8], format: VectorFormat) -> Result<Vec<f64>, String> {
    let values = match format {
        VectorFormat::F32 => {
            if !bytes.len().is_multiple_of(4) {
                return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect::<Vec<_>>()
        }
        VectorFormat::Csv => {
            let text = std::str::from_utf8(bytes).map_err(|_| "vector file is not UTF-8".to_string())?;
            text.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .enumerate()
                .map(|(i, t)| t.parse::<f64>().map_err(|_| format!("entry {i}: `{t}` is not a number")))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    if values.is_empty() {
        return Err("vector file holds no values".into());
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(format!("entry {i} is not finite"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_little_endian() {
        let mut bytes = Vec::new();
        for v in [1.5f32, -0.25, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(parse_vector(&bytes, VectorFormat::F32).unwrap(), vec![1.5, -0.25, 3.0]);
        assert!(parse_vector(&bytes[..5], VectorFormat::F32).is_err());
        assert!(parse_vector(&f32::NAN.to_le_bytes(), VectorFormat::F32).is_err());
    }

    #[test]
    fn csv_text() {
        let v = parse_vector(b"0.8, -0.1\n0.05 -0.9\n", VectorFormat::Csv).unwrap();
        assert_eq!(v, vec![0.8, -0.1, 0.05, -0.9]);
        assert!(parse_vector(b"1,x", VectorFormat::Csv).is_err());
        assert!(parse_vector(b" \n", VectorFormat::Csv).is_err());
        assert!(parse_vector(b"inf", VectorFormat::Csv).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(VectorFormat::from_path(Path::new("a.CSV")), VectorFormat::Csv);
        assert_eq!(VectorFormat::from_path(Path::new("a.f32")), VectorFormat::F32);
        assert_eq!(VectorFormat::from_path(Path::new("a")), VectorFormat::F32);
    }
}
