use anyhow::{Context, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Provenance written as `#` comment lines ahead of every CSV header.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

/// Writes one CSV file: comment block, header row, then records.
pub struct CsvFile {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn create(dir: &Path, name: &str, stamp: &Stamp, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# miso-delay {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(buf, "# command {}", stamp.command)?;
        writeln!(buf, "# config_sha256 {}", stamp.config_hash)?;
        writeln!(buf, "# seed {}", stamp.seed)?;
        let mut inner = csv::Writer::from_writer(buf);
        inner.write_record(header)?;
        Ok(CsvFile { path, inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush().with_context(|| format!("flushing {}", self.path.display()))?;
        Ok(self.path)
    }
}

/// Shortest round-trip representation, so reruns compare byte for byte.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_precede_header() {
        let dir = tempfile::tempdir().unwrap();
        let stamp = Stamp { command: "analyze", config_hash: "ab".into(), seed: 3 };
        let mut f = CsvFile::create(dir.path(), "x.csv", &stamp, &["a", "b"]).unwrap();
        f.row([num(1.5), opt_num(None)]).unwrap();
        let p = f.finish().unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# miso-delay "));
        assert_eq!(lines[2], "# config_sha256 ab");
        assert_eq!(lines[4], "a,b");
        assert_eq!(lines[5], "1.5,");
    }
}
