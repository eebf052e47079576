//! Loader for pretrained word vectors in the common whitespace-separated text
//! layout: `token v1 v2 ... vd`, one token per line.

use std::collections::HashMap;
use std::io::BufRead;

use crate::{NeuralError, Result};

/// Reads vectors of dimension `dim`. Blank lines are skipped; later
/// duplicates of a token are ignored.
pub fn read_word_vectors<R: BufRead>(reader: R, dim: usize) -> Result<HashMap<String, Vec<f32>>> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| NeuralError::WordVectors { line: i + 1, msg: e.to_string() })?;
        if values.len() != dim {
            return Err(NeuralError::WordVectors {
                line: i + 1,
                msg: format!("expected {dim} components, found {}", values.len()),
            });
        }
        out.entry(token.to_string()).or_insert(values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let text = "by 0.1 0.2\n\nthe 1 2\n";
        let v = read_word_vectors(text.as_bytes(), 2).unwrap();
        assert_eq!(v["by"], vec![0.1, 0.2]);
        assert_eq!(v.len(), 2);
        let err = read_word_vectors("x 1 2 3\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(err, NeuralError::WordVectors { line: 1, .. }));
    }
}
