//! CSV ingestion, bundled datasets, simulation generators and report output.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dataset::Dataset;
use crate::engine::Table;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{parse_model_config, EstimationConfig, GroupBinding, Equation, ModelSpec};

/// Reads a headed CSV table. A first column whose cells are all non-numeric
/// becomes row labels; every other cell must be a number.
pub fn read_csv_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if records.is_empty() {
        return Err(Error::EmptyData);
    }

    let labelled = header.len() > 1
        && records
            .iter()
            .all(|r| !r[0].is_empty() && r[0].parse::<f64>().is_err());
    let skip = usize::from(labelled);
    let names = header[skip..].to_vec();
    let mut values = Array2::zeros((records.len(), names.len()));
    for (i, rec) in records.iter().enumerate() {
        for (j, cell) in rec[skip..].iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row: i + 1,
                    col: j + skip + 1,
                });
            }
            values[[i, j]] = cell.parse::<f64>().map_err(|_| Error::ParseCell {
                row: i + 1,
                col: j + skip + 1,
                value: cell.clone(),
            })?;
        }
    }
    let labels = labelled.then(|| records.iter().map(|r| r[0].clone()).collect());
    Dataset::with_row_labels(values, names, labels)
}

pub fn read_csv_path(path: &Path) -> Result<Dataset> {
    read_csv_dataset(std::fs::File::open(path)?)
}

const SENEGAL_CSV: &str = include_str!("../assets/senegal.csv");
const DAKAR_RENT_CSV: &str = include_str!("../assets/dakar_rent.csv");

/// Built-in model names, usable as `builtin:<name>` on the command line.
pub const BUILTIN_MODELS: [&str; 4] = ["senegal_a", "senegal_b", "senegal_joint", "dakar_rent"];

/// Names of the shipped datasets.
pub const BUNDLED_DATASETS: [&str; 2] = ["senegal", "dakar_rent"];

/// A built-in model and its default estimation options.
pub fn builtin_model(name: &str) -> Result<(ModelSpec, EstimationConfig)> {
    let text = match name {
        "senegal_a" => include_str!("../assets/models/senegal_a.json"),
        "senegal_b" => include_str!("../assets/models/senegal_b.json"),
        "senegal_joint" => include_str!("../assets/models/senegal_joint.json"),
        "dakar_rent" => include_str!("../assets/models/dakar_rent.json"),
        other => return Err(Error::InvalidParameter(format!("unknown built-in model {other:?}"))),
    };
    parse_model_config(text)
}

#[derive(Debug, Clone)]
pub struct BundledDataset {
    pub name: String,
    pub dataset: Dataset,
    pub default_model: ModelSpec,
    pub default_config: EstimationConfig,
}

/// The departmental election data (30 rows) or the Dakar rent sample (41 rows),
/// each with its reference model: the joint two-equation election model, and
/// the rent model with size × building and size × area interactions.
pub fn load_bundled_dataset(name: &str) -> Result<BundledDataset> {
    let (csv_text, model) = match name {
        "senegal" => (SENEGAL_CSV, "senegal_joint"),
        "dakar_rent" => (DAKAR_RENT_CSV, "dakar_rent"),
        other => return Err(Error::UnknownDataset(other.to_string())),
    };
    let dataset = read_csv_dataset(csv_text.as_bytes())?;
    let (default_model, default_config) = builtin_model(model)?;
    Ok(BundledDataset {
        name: name.to_string(),
        dataset,
        default_model,
        default_config,
    })
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[-1, 1)` from the top 53 bits.
    pub fn next_symmetric(&mut self) -> f64 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * u - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSpec {
    pub seed: u64,
    pub n: usize,
    pub group_sizes: (usize, usize),
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            seed: 0,
            n: 100,
            group_sizes: (10, 10),
        }
    }
}

impl SimSpec {
    pub fn with_seed(seed: u64) -> Self {
        SimSpec {
            seed,
            ..Default::default()
        }
    }
}

/// Two groups of i.i.d. uniform variables `a1..`, `b1..` and a response
/// `c = 0.2(a1+b1)/√(2/3) + 0.8(a2/10 + b2/10 + a2·b2)/√(53/450)`.
///
/// Draws are column-major: all of `a1`, then `a2`, ..., then the `b` columns.
pub fn generate_interaction_sim(spec: &SimSpec) -> Result<Dataset> {
    let (ja, jb) = spec.group_sizes;
    if spec.n < 4 {
        return Err(Error::InvalidParameter(format!(
            "simulation needs n >= 4, got {}",
            spec.n
        )));
    }
    if ja < 2 || jb < 2 {
        return Err(Error::InvalidParameter(
            "each simulated group needs at least 2 variables".into(),
        ));
    }
    let n = spec.n;
    let mut rng = SplitMix64::new(spec.seed);
    let mut values = Array2::zeros((n, ja + jb + 1));
    for j in 0..ja + jb {
        for i in 0..n {
            values[[i, j]] = rng.next_symmetric();
        }
    }
    let c1_scale = (2.0_f64 / 3.0).sqrt();
    let c2_scale = (53.0_f64 / 450.0).sqrt();
    for i in 0..n {
        let (a1, a2) = (values[[i, 0]], values[[i, 1]]);
        let (b1, b2) = (values[[i, ja]], values[[i, ja + 1]]);
        let c1 = (a1 + b1) / c1_scale;
        let c2 = (a2 / 10.0 + b2 / 10.0 + a2 * b2) / c2_scale;
        values[[i, ja + jb]] = 0.2 * c1 + 0.8 * c2;
    }
    let mut names: Vec<String> = (1..=ja).map(|j| format!("a{j}")).collect();
    names.extend((1..=jb).map(|j| format!("b{j}")));
    names.push("c".into());
    Dataset::new(values, names)
}

/// `C ~ A + B` with an `A × B` product, over the columns of
/// [`generate_interaction_sim`].
pub fn interaction_sim_model(group_sizes: (usize, usize)) -> ModelSpec {
    let a: Vec<String> = (1..=group_sizes.0).map(|j| format!("a{j}")).collect();
    let b: Vec<String> = (1..=group_sizes.1).map(|j| format!("b{j}")).collect();
    let bind = |lv: &str, cols: Vec<String>| GroupBinding {
        columns: cols,
        ..GroupBinding::new(lv, &[])
    };
    ModelSpec {
        groups: vec![bind("A", a), bind("B", b), GroupBinding::new("C", &["c"])],
        equations: vec![Equation::new("C", &["A", "B"]).with_interaction("A", &["B"])],
    }
}

/// Four observations where the orthogonal projection of `y` onto `⟨a, b⟩`
/// points along `b` although `y = a + √3·c` (before scaling).
///
/// The vectors are built from an orthonormal basis of the zero-mean
/// subspace of ℝ⁴, so every column is already standardized.
pub fn generate_figure8_scenario() -> (Dataset, ModelSpec) {
    let s2 = 2.0_f64.sqrt();
    let s6 = 6.0_f64.sqrt();
    let s12 = 12.0_f64.sqrt();
    let u1 = [1.0 / s2, -1.0 / s2, 0.0, 0.0];
    let u2 = [1.0 / s6, 1.0 / s6, -2.0 / s6, 0.0];
    let u3 = [1.0 / s12, 1.0 / s12, 1.0 / s12, -3.0 / s12];
    let s3 = 3.0_f64.sqrt();
    let mut values = Array2::zeros((4, 4));
    for i in 0..4 {
        values[[i, 0]] = u1[i];
        values[[i, 1]] = u2[i];
        values[[i, 2]] = (-u1[i] + u2[i] + u3[i]) / s3;
        values[[i, 3]] = (u2[i] + u3[i]) / s2;
    }
    let y = linalg::standardize(values.column(3)).expect("non-constant by construction");
    values.column_mut(3).assign(y.scores());
    let data = Dataset::new(
        values,
        ["a", "b", "c", "y"].iter().map(|s| s.to_string()).collect(),
    )
    .expect("well-formed by construction");
    let spec = ModelSpec {
        groups: vec![
            GroupBinding::new("X1", &["a", "b"]),
            GroupBinding::new("X2", &["c"]),
            GroupBinding::new("Y", &["y"]),
        ],
        equations: vec![Equation::new("Y", &["X1", "X2"])],
    };
    (data, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

/// Renders tables as aligned plain text, first column left-aligned.
pub fn render_text(tables: &[Table]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&t.title);
        out.push('\n');
        let ncols = t.header.len();
        let mut widths: Vec<usize> = t.header.iter().map(|h| h.chars().count()).collect();
        for row in &t.rows {
            for (j, cell) in row.iter().enumerate().take(ncols) {
                widths[j] = widths[j].max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (j, cell) in cells.iter().enumerate().take(ncols) {
                if j > 0 {
                    s.push_str("  ");
                }
                let pad = widths[j] - cell.chars().count();
                if j == 0 {
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(cell);
                }
            }
            s.trim_end().to_string()
        };
        out.push_str(&line(&t.header));
        out.push('\n');
        for row in &t.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
    }
    out
}

pub fn write_table_csv<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.header).map_err(csv_io)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Text goes to the file `destination`; CSV writes `<name>.csv` per table
/// into the directory `destination`, creating it if needed.
pub fn write_report(tables: &[Table], format: ReportFormat, destination: &Path) -> Result<()> {
    match format {
        ReportFormat::Text => {
            std::fs::write(destination, render_text(tables))?;
        }
        ReportFormat::Csv => {
            std::fs::create_dir_all(destination)?;
            for t in tables {
                let file = std::fs::File::create(destination.join(format!("{}.csv", t.name)))?;
                write_table_csv(t, std::io::BufWriter::new(file))?;
            }
        }
    }
    Ok(())
}
