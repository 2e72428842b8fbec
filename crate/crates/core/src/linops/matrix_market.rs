//! Matrix Market coordinate format reader/writer for [`SparseMatrix`].
//!
//! Supported headers: `matrix coordinate real|integer general|symmetric`.
//! Symmetric files store the lower triangle and are expanded on read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmLayout {
    General,
    Symmetric,
}

fn mm_err(line: usize, msg: impl Into<String>) -> Error {
    Error::MatrixMarket {
        line,
        msg: msg.into(),
    }
}

/// Reads a Matrix Market coordinate file, expanding symmetric storage.
pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<SparseMatrix> {
    let file = File::open(path)?;
    read_matrix_market_from(BufReader::new(file))
}

pub fn read_matrix_market_from<R: BufRead>(reader: R) -> Result<SparseMatrix> {
    let mut lines = reader.lines().enumerate();

    let (lineno, header) = lines
        .next()
        .ok_or_else(|| mm_err(1, "empty file"))
        .and_then(|(n, l)| Ok((n + 1, l?)))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" {
        return Err(mm_err(lineno, "header must be '%%MatrixMarket matrix coordinate <field> <symmetry>'"));
    }
    if fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(mm_err(lineno, "only 'matrix coordinate' files are supported"));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(mm_err(lineno, format!("unsupported field type '{}'", fields[3])));
    }
    let layout = match fields[4].as_str() {
        "general" => MmLayout::General,
        "symmetric" => MmLayout::Symmetric,
        other => return Err(mm_err(lineno, format!("unsupported symmetry '{other}'"))),
    };

    // Size line: first non-comment line.
    let mut size: Option<(usize, usize, usize)> = None;
    let mut size_line = 0usize;
    for (n, line) in &mut lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(mm_err(n + 1, "size line must be 'rows cols nnz'"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| mm_err(n + 1, format!("bad size entry '{s}': {e}")))
        };
        size = Some((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
        size_line = n + 1;
        break;
    }
    let (n_rows, n_cols, nnz) = size.ok_or_else(|| mm_err(size_line, "missing size line"))?;
    if layout == MmLayout::Symmetric && n_rows != n_cols {
        return Err(mm_err(size_line, "symmetric matrix must be square"));
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz * 2);
    let mut seen = 0usize;
    for (n, line) in &mut lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(mm_err(n + 1, "entry line must be 'i j value'"));
        }
        let i: usize = parts[0]
            .parse()
            .map_err(|e| mm_err(n + 1, format!("bad row index: {e}")))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|e| mm_err(n + 1, format!("bad column index: {e}")))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|e| mm_err(n + 1, format!("bad value: {e}")))?;
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(mm_err(n + 1, format!("index ({i}, {j}) outside 1..={n_rows} x 1..={n_cols}")));
        }
        if layout == MmLayout::Symmetric && j > i {
            return Err(mm_err(n + 1, "symmetric files must store the lower triangle"));
        }
        triplets.push((i - 1, j - 1, v));
        if layout == MmLayout::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(mm_err(0, format!("size line declared {nnz} entries, file has {seen}")));
    }
    SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// Writes a sparse matrix in coordinate format. For `MmLayout::Symmetric` the
/// matrix must be symmetric and only the lower triangle is stored.
pub fn write_matrix_market<P: AsRef<Path>>(
    path: P,
    a: &SparseMatrix,
    layout: MmLayout,
) -> Result<()> {
    let file = File::create(path)?;
    write_matrix_market_to(BufWriter::new(file), a, layout)
}

pub fn write_matrix_market_to<W: Write>(
    mut w: W,
    a: &SparseMatrix,
    layout: MmLayout,
) -> Result<()> {
    let kind = match layout {
        MmLayout::General => "general",
        MmLayout::Symmetric => {
            if !a.is_symmetric(0.0) {
                return Err(Error::arg(
                    "symmetric matrix market output requires an exactly symmetric matrix",
                ));
            }
            "symmetric"
        }
    };
    let entries: Vec<(usize, usize, f64)> = (0..a.n_rows())
        .flat_map(|i| {
            let (offs, cols, vals) = (a.row_offsets(), a.col_indices(), a.values());
            (offs[i]..offs[i + 1]).filter_map(move |k| {
                let j = cols[k];
                if kind == "symmetric" && j > i {
                    None
                } else {
                    Some((i, j, vals[k]))
                }
            })
        })
        .collect();
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::SeedPath;
    use proptest::prelude::*;

    #[test]
    fn reads_general_with_comments() {
        let text = "%%MatrixMarket matrix coordinate real general\n% a comment\n2 3 2\n1 2 1.5\n2 3 -2\n";
        let a = read_matrix_market_from(text.as_bytes()).unwrap();
        assert_eq!((a.n_rows(), a.n_cols(), a.nnz()), (2, 3, 2));
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(1, 2), -2.0);
    }

    #[test]
    fn symmetric_expansion() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 2\n2 1 -1\n3 3 5\n";
        let a = read_matrix_market_from(text.as_bytes()).unwrap();
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert!(a.is_symmetric(0.0));
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn rejects_bad_headers_and_counts() {
        assert!(read_matrix_market_from("%%MatrixMarket matrix array real general\n1 1\n".as_bytes()).is_err());
        assert!(read_matrix_market_from("%%MatrixMarket matrix coordinate complex general\n1 1 0\n".as_bytes()).is_err());
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(read_matrix_market_from(short.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bitwise(seed in 0u64..500) {
            let mut rng = SeedPath::new(seed).stream();
            let n = 1 + (rng.next_u64() % 12) as usize;
            let mut triplets = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if rng.next_f64() < 0.3 {
                        triplets.push((i, j, rng.next_normal()));
                    }
                }
            }
            let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
            let mut buf = Vec::new();
            write_matrix_market_to(&mut buf, &a, MmLayout::General).unwrap();
            let back = read_matrix_market_from(&buf[..]).unwrap();
            prop_assert_eq!(a, back);
        }
    }
}
