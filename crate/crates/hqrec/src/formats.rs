//! Binary file formats: "HQEM" embedding tables and "HQCD" code tables.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use hqrec_core::quantizer::{QuantParams, QuantizedTable};
use hqrec_core::Matrix;

pub const HQEM_MAGIC: [u8; 4] = *b"HQEM";
pub const HQCD_MAGIC: [u8; 4] = *b"HQCD";
pub const FORMAT_VERSION: u32 = 1;
/// Element type tag for row-major IEEE-754 64-bit values.
pub const ELEM_F64: u8 = 1;

/// Failure reading or validating one of the binary formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("unsupported element type tag {0}")]
    BadElementType(u8),
    #[error("file ends before the declared payload")]
    Truncated,
    #[error("inconsistent file: {0}")]
    Inconsistent(String),
}

fn map_eof(e: io::Error) -> FormatError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FormatError::Truncated
    } else {
        FormatError::Io(e)
    }
}

fn read_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(map_eof)?;
    if found != expected {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

fn checked_len(rows: u64, cols: u32) -> Result<usize, FormatError> {
    usize::try_from(rows)
        .ok()
        .and_then(|r| r.checked_mul(cols as usize))
        .ok_or_else(|| FormatError::Inconsistent(format!("{rows} x {cols} overflows")))
}

/// Ensure the reader is exhausted; declared sizes must account for every byte.
fn expect_end(r: &mut impl Read) -> Result<(), FormatError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(FormatError::Inconsistent("trailing bytes".into())),
    }
}

/// Write a row-major f64 matrix as an "HQEM" file.
pub fn write_embeddings(path: &Path, m: &Matrix) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&HQEM_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(m.rows() as u64)?;
    w.write_u32::<LittleEndian>(m.cols() as u32)?;
    w.write_u8(ELEM_F64)?;
    for &x in m.iter() {
        w.write_f64::<LittleEndian>(x)?;
    }
    w.flush()
}

/// Read an "HQEM" file back into a matrix, bit-exactly.
pub fn read_embeddings(path: &Path) -> Result<Matrix, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, HQEM_MAGIC)?;
    let version = r.read_u32::<LittleEndian>().map_err(map_eof)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let rows = r.read_u64::<LittleEndian>().map_err(map_eof)?;
    let cols = r.read_u32::<LittleEndian>().map_err(map_eof)?;
    let elem = r.read_u8().map_err(map_eof)?;
    if elem != ELEM_F64 {
        return Err(FormatError::BadElementType(elem));
    }
    let len = checked_len(rows, cols)?;
    let mut data = vec![0.0f64; len];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(map_eof)?;
    expect_end(&mut r)?;
    Ok(Matrix::from_vec(rows as usize, cols as usize, data))
}

/// Bytes needed for the code payload of `n` codes at width `b`.
fn code_payload_len(n: usize, b: u8) -> usize {
    match b {
        1 => n.div_ceil(8),
        2..=8 => n,
        _ => n * 2,
    }
}

/// Write a quantized code table as an "HQCD" file. Codes are bit-packed for
/// b=1 (LSB-first, 8 per byte), one byte per code for b ≤ 8, two bytes
/// little-endian otherwise; per-row code sums follow the payload.
pub fn write_codes(path: &Path, table: &QuantizedTable) -> io::Result<()> {
    let p = table.params;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&HQCD_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(table.rows() as u64)?;
    w.write_u32::<LittleEndian>(table.cols() as u32)?;
    w.write_u8(p.b)?;
    w.write_f64::<LittleEndian>(p.l)?;
    w.write_f64::<LittleEndian>(p.u)?;
    w.write_f64::<LittleEndian>(p.delta())?;

    let codes = table.codes();
    match p.b {
        1 => {
            let mut byte = 0u8;
            for (i, &c) in codes.iter().enumerate() {
                byte |= (c as u8 & 1) << (i % 8);
                if i % 8 == 7 {
                    w.write_u8(byte)?;
                    byte = 0;
                }
            }
            if codes.len() % 8 != 0 {
                w.write_u8(byte)?;
            }
        }
        2..=8 => {
            for &c in codes {
                w.write_u8(c as u8)?;
            }
        }
        _ => {
            for &c in codes {
                w.write_u16::<LittleEndian>(c)?;
            }
        }
    }

    for r in 0..table.rows() {
        let sum: u32 = table.row(r).iter().map(|&c| c as u32).sum();
        w.write_u32::<LittleEndian>(sum)?;
    }
    w.flush()
}

/// Read an "HQCD" file, validating the header, the stored step size, the
/// code range, and the per-row sums.
pub fn read_codes(path: &Path) -> Result<(QuantizedTable, Vec<u32>), FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, HQCD_MAGIC)?;
    let version = r.read_u32::<LittleEndian>().map_err(map_eof)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let rows = r.read_u64::<LittleEndian>().map_err(map_eof)?;
    let cols = r.read_u32::<LittleEndian>().map_err(map_eof)?;
    let b = r.read_u8().map_err(map_eof)?;
    let l = r.read_f64::<LittleEndian>().map_err(map_eof)?;
    let u = r.read_f64::<LittleEndian>().map_err(map_eof)?;
    let delta = r.read_f64::<LittleEndian>().map_err(map_eof)?;

    let params = QuantParams::new(l, u, b)
        .map_err(|e| FormatError::Inconsistent(format!("bad quantizer params: {e}")))?;
    if delta.to_bits() != params.delta().to_bits() {
        return Err(FormatError::Inconsistent(format!(
            "stored step {delta} does not match (u-l)/(2^b-1) = {}",
            params.delta()
        )));
    }

    let len = checked_len(rows, cols)?;
    let mut payload = vec![0u8; code_payload_len(len, b)];
    r.read_exact(&mut payload).map_err(map_eof)?;
    let codes: Vec<u16> = match b {
        1 => (0..len)
            .map(|i| ((payload[i / 8] >> (i % 8)) & 1) as u16)
            .collect(),
        2..=8 => payload.iter().map(|&x| x as u16).collect(),
        _ => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect(),
    };
    let top = params.levels();
    if let Some(bad) = codes.iter().find(|&&c| c as u32 > top) {
        return Err(FormatError::Inconsistent(format!(
            "code {bad} out of range for {b} bits"
        )));
    }

    let mut row_sums = vec![0u32; rows as usize];
    r.read_u32_into::<LittleEndian>(&mut row_sums).map_err(map_eof)?;
    expect_end(&mut r)?;

    let table = QuantizedTable::from_codes(codes, rows as usize, cols as usize, params);
    for (i, &stored) in row_sums.iter().enumerate() {
        let actual: u32 = table.row(i).iter().map(|&c| c as u32).sum();
        if stored != actual {
            return Err(FormatError::Inconsistent(format!(
                "row {i} sum {stored} does not match codes ({actual})"
            )));
        }
    }
    Ok((table, row_sums))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::fs;

    fn seeded_rng(seed: u64) -> impl Rng {
        rand::rngs::StdRng::seed_from_u64(seed)
    }

    fn random_table(rows: usize, cols: usize, b: u8, seed: u64) -> QuantizedTable {
        let mut rng = seeded_rng(seed);
        let params = QuantParams::new(-0.7, 0.9, b).unwrap();
        let codes: Vec<u16> = (0..rows * cols)
            .map(|_| rng.random_range(0..=params.levels()) as u16)
            .collect();
        QuantizedTable::from_codes(codes, rows, cols, params)
    }

    #[test]
    fn embeddings_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.hqem");
        let mut rng = seeded_rng(7);
        let mut data: Vec<f64> = (0..23 * 5).map(|_| rng.random_range(-3.0..3.0)).collect();
        data[0] = -0.0;
        data[1] = f64::MIN_POSITIVE / 8.0;
        data[2] = 1e300;
        let m = Matrix::from_vec(23, 5, data);
        write_embeddings(&path, &m).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.rows(), 23);
        assert_eq!(back.cols(), 5);
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn codes_round_trip_is_bit_exact_across_widths() {
        let dir = tempfile::tempdir().unwrap();
        for (b, seed) in [(1u8, 1u64), (4, 2), (8, 3), (12, 4), (16, 5)] {
            let path = dir.path().join(format!("codes{b}.hqcd"));
            let table = random_table(17, 13, b, seed);
            write_codes(&path, &table).unwrap();
            let (back, sums) = read_codes(&path).unwrap();
            assert_eq!(back.codes(), table.codes(), "b={b}");
            assert_eq!(back.rows(), 17);
            assert_eq!(back.cols(), 13);
            assert_eq!(back.params.l, table.params.l);
            assert_eq!(back.params.u, table.params.u);
            assert_eq!(back.params.b, b);
            assert_eq!(sums.len(), 17);
            let expect: u32 = table.row(3).iter().map(|&c| c as u32).sum();
            assert_eq!(sums[3], expect);
        }
    }

    #[test]
    fn packed_bit_width_is_dense() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.hqcd");
        let table = random_table(3, 10, 1, 9);
        write_codes(&path, &table).unwrap();
        let bytes = fs::read(&path).unwrap();
        // header 45 bytes + ceil(30/8)=4 payload + 3*4 sums
        assert_eq!(bytes.len(), 45 + 4 + 12);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.hqcd");
        let table = random_table(4, 4, 4, 11);
        write_codes(&path, &table).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_codes(&path).unwrap_err(),
            FormatError::BadMagic { .. }
        ));

        let epath = dir.path().join("emb.hqem");
        write_embeddings(&epath, &Matrix::zeros(2, 2)).unwrap();
        let mut bytes = fs::read(&epath).unwrap();
        bytes[3] = b'!';
        fs::write(&epath, &bytes).unwrap();
        assert!(matches!(
            read_embeddings(&epath).unwrap_err(),
            FormatError::BadMagic { .. }
        ));
    }

    #[test]
    fn truncated_and_padded_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.hqcd");
        let table = random_table(6, 6, 8, 13);
        write_codes(&path, &table).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_codes(&path).unwrap_err(), FormatError::Truncated));

        let mut padded = bytes.clone();
        padded.push(0);
        fs::write(&path, &padded).unwrap();
        assert!(matches!(
            read_codes(&path).unwrap_err(),
            FormatError::Inconsistent(_)
        ));
    }

    #[test]
    fn tampered_row_sum_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codes.hqcd");
        let table = random_table(5, 4, 4, 17);
        write_codes(&path, &table).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_codes(&path).unwrap_err(),
            FormatError::Inconsistent(_)
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.hqem");
        write_embeddings(&path, &Matrix::zeros(1, 1)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_embeddings(&path).unwrap_err(),
            FormatError::BadVersion(9)
        ));
    }
}
