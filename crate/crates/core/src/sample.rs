//! Sample clouds exchanged between pipeline stages, with the CSV artifact
//! format used by the CLI.

use crate::error::{Error, Result};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Langevin,
    ReverseOde,
    Generator,
    Metropolis,
    GroundTruth,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Langevin => "langevin",
            Provenance::ReverseOde => "reverse_ode",
            Provenance::Generator => "generator",
            Provenance::Metropolis => "metropolis",
            Provenance::GroundTruth => "ground_truth",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "langevin" => Provenance::Langevin,
            "reverse_ode" => Provenance::ReverseOde,
            "generator" => Provenance::Generator,
            "metropolis" => Provenance::Metropolis,
            "ground_truth" => Provenance::GroundTruth,
            other => return Err(Error::invalid(format!("unknown provenance `{other}`"))),
        })
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A set of d-dimensional points with a per-row component label.
#[derive(Debug, Clone)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    labels: Vec<u32>,
    pub provenance: Provenance,
}

impl SampleSet {
    pub fn new(dim: usize, provenance: Provenance) -> Self {
        SampleSet {
            dim,
            points: Vec::new(),
            labels: Vec::new(),
            provenance,
        }
    }

    pub fn with_capacity(dim: usize, n: usize, provenance: Provenance) -> Self {
        SampleSet {
            dim,
            points: Vec::with_capacity(n * dim),
            labels: Vec::with_capacity(n),
            provenance,
        }
    }

    pub fn from_parts(
        dim: usize,
        points: Vec<f64>,
        labels: Vec<u32>,
        provenance: Provenance,
    ) -> Self {
        assert_eq!(points.len(), labels.len() * dim);
        SampleSet {
            dim,
            points,
            labels,
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, point: &[f64], label: u32) {
        assert_eq!(point.len(), self.dim);
        self.points.extend_from_slice(point);
        self.labels.push(label);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    /// Values of one coordinate across all rows.
    pub fn column(&self, d: usize) -> Vec<f64> {
        assert!(d < self.dim);
        self.rows().map(|r| r[d]).collect()
    }

    pub fn count_label(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "dim={} component provenance", self.dim)?;
        for (i, row) in self.rows().enumerate() {
            for v in row {
                write!(f, "{v:.17e},")?;
            }
            writeln!(f, "{},{}", self.labels[i], self.provenance)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{}: empty sample file", path.display())))??;
        let dim: usize = header
            .split_whitespace()
            .next()
            .and_then(|t| t.strip_prefix("dim="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid(format!("{}: bad sample header", path.display())))?;
        let mut set: Option<SampleSet> = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(Error::invalid(format!(
                    "{}: row has {} fields, expected {}",
                    path.display(),
                    fields.len(),
                    dim + 2
                )));
            }
            let mut point = Vec::with_capacity(dim);
            for v in &fields[..dim] {
                point.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad float `{v}`")))?,
                );
            }
            let label: u32 = fields[dim]
                .parse()
                .map_err(|_| Error::invalid(format!("bad label `{}`", fields[dim])))?;
            let prov = Provenance::parse(fields[dim + 1])?;
            let set = set.get_or_insert_with(|| SampleSet::new(dim, prov));
            set.push(&point, label);
        }
        set.ok_or_else(|| Error::invalid(format!("{}: no rows", path.display())))
    }
}
