//! CSV and number formatting shared by every writer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest form that still round-trips: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// RFC-4180 writer (comma separated, CRLF record terminator).
pub fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(inner)
}

pub fn csv_file(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv_writer(BufWriter::new(File::create(path)?)))
}

pub fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn records_end_in_crlf() {
        let mut w = csv_writer(Vec::new());
        w.write_record(["a", "b"]).unwrap();
        let bytes = w.into_inner().unwrap();
        assert_eq!(bytes, b"a,b\r\n");
    }
}
