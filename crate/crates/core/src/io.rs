//! Readers and writers for grids, functions, coefficients and matrices.

/// Serde adapter for norm exponents: finite values as numbers, ∞ as "inf".
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                other => other.parse().map_err(serde::de::Error::custom),
            },
        }
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{NormRatioReport, ProfileBin};
use crate::error::{FioError, Result};
use crate::fio::{GaborMatrix, Route};
use crate::gabor::{Coefficients, Lattice};
use crate::grid::{Grid, SampledFunction, Side};

fn csv_err(e: csv::Error) -> FioError {
    FioError::Parse(e.to_string())
}

/// Writes a `# {json}` header line followed by a CSV table.
pub fn write_table<H, R, W>(out: W, header: &H, rows: impl IntoIterator<Item = R>) -> Result<()>
where
    H: Serialize,
    R: Serialize,
    W: Write,
{
    let mut out = BufWriter::new(out);
    writeln!(out, "# {}", serde_json::to_string(header)?)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_table`].
pub fn read_table<H, R, I>(input: I) -> Result<(H, Vec<R>)>
where
    H: DeserializeOwned,
    R: DeserializeOwned,
    I: Read,
{
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| FioError::Parse("missing '#' header line".into()))?;
    let header = serde_json::from_str(json.trim())?;
    let rows = csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct GridHeader {
    d: usize,
    l: f64,
    n: usize,
}

impl From<&Grid> for GridHeader {
    fn from(g: &Grid) -> Self {
        GridHeader { d: g.d(), l: g.l(), n: g.n() }
    }
}

impl GridHeader {
    fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.l, self.n)
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionHeader {
    #[serde(flatten)]
    grid: GridHeader,
    side: Side,
}

#[derive(Serialize, Deserialize)]
struct ComplexRow {
    re: f64,
    im: f64,
}

/// Samples in storage order, one (re, im) row each.
pub fn write_function<W: Write>(out: W, f: &SampledFunction) -> Result<()> {
    let header = FunctionHeader { grid: f.grid().into(), side: f.side() };
    write_table(out, &header, f.values().iter().map(|v| ComplexRow { re: v.re, im: v.im }))
}

pub fn read_function<I: Read>(input: I) -> Result<SampledFunction> {
    let (h, rows): (FunctionHeader, Vec<ComplexRow>) = read_table(input)?;
    SampledFunction::new(h.grid.grid()?, h.side, rows.into_iter().map(|r| C64::new(r.re, r.im)).collect())
}

#[derive(Serialize, Deserialize)]
struct LatticeHeader {
    grid: GridHeader,
    alpha: f64,
    beta: f64,
    time_count: usize,
    freq_count: usize,
}

impl LatticeHeader {
    fn of(l: &Lattice) -> Self {
        LatticeHeader {
            grid: l.grid().into(),
            alpha: l.alpha(),
            beta: l.beta(),
            time_count: l.time_count(),
            freq_count: l.freq_count(),
        }
    }

    fn lattice(&self) -> Result<Lattice> {
        let l = Lattice::new(self.grid.grid()?, self.alpha, self.beta)?;
        if l.time_count() != self.time_count || l.freq_count() != self.freq_count {
            return Err(FioError::Parse("lattice index ranges disagree with α, β".into()));
        }
        Ok(l)
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientRow {
    time: usize,
    freq: usize,
    m1: f64,
    n1: f64,
    m2: Option<f64>,
    n2: Option<f64>,
    re: f64,
    im: f64,
}

/// One row per lattice point: indices, coordinates, value.
pub fn write_coefficients<W: Write>(out: W, c: &Coefficients) -> Result<()> {
    let lat = *c.lattice();
    let d = lat.grid().d();
    let rows = c.values().iter().enumerate().map(|(idx, v)| {
        let (time, freq) = lat.split(idx);
        let (m, n) = lat.point(idx);
        CoefficientRow {
            time,
            freq,
            m1: m[0],
            n1: n[0],
            m2: (d == 2).then_some(m[1]),
            n2: (d == 2).then_some(n[1]),
            re: v.re,
            im: v.im,
        }
    });
    write_table(out, &LatticeHeader::of(&lat), rows)
}

pub fn read_coefficients<I: Read>(input: I) -> Result<Coefficients> {
    let (h, rows): (LatticeHeader, Vec<CoefficientRow>) = read_table(input)?;
    let lat = h.lattice()?;
    if rows.len() != lat.len() {
        return Err(FioError::ShapeMismatch { expected: lat.len(), found: rows.len() });
    }
    let mut c = Coefficients::zeros(lat);
    for r in rows {
        if r.time >= lat.time_count() || r.freq >= lat.freq_count() {
            return Err(FioError::Parse(format!("index ({}, {}) out of range", r.time, r.freq)));
        }
        c.values_mut()[lat.index(r.time, r.freq)] = C64::new(r.re, r.im);
    }
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    lattice: LatticeHeader,
    epsilon: f64,
    route: Route,
    phase: String,
    max_modulus: f64,
    nnz: usize,
}

#[derive(Serialize, Deserialize)]
struct MatrixRow {
    /// (m', n') as lattice time and frequency indices.
    row_time: usize,
    row_freq: usize,
    /// (m, n).
    col_time: usize,
    col_freq: usize,
    re: f64,
    im: f64,
}

/// Stored entries in column order.
pub fn write_matrix<W: Write>(out: W, m: &GaborMatrix) -> Result<()> {
    let lat = *m.lattice();
    let header = MatrixHeader {
        lattice: LatticeHeader::of(&lat),
        epsilon: m.epsilon(),
        route: m.route(),
        phase: m.phase_name().to_string(),
        max_modulus: m.max_modulus(),
        nnz: m.nnz(),
    };
    let rows = m.entries().map(|(r, c, v)| {
        let (row_time, row_freq) = lat.split(r);
        let (col_time, col_freq) = lat.split(c);
        MatrixRow { row_time, row_freq, col_time, col_freq, re: v.re, im: v.im }
    });
    write_table(out, &header, rows)
}

pub fn read_matrix<I: Read>(input: I) -> Result<GaborMatrix> {
    let (h, rows): (MatrixHeader, Vec<MatrixRow>) = read_table(input)?;
    let lat = h.lattice.lattice()?;
    if rows.len() != h.nnz {
        return Err(FioError::ShapeMismatch { expected: h.nnz, found: rows.len() });
    }
    let tc = lat.time_count();
    let fc = lat.freq_count();
    let mut entries = Vec::with_capacity(rows.len());
    for r in rows {
        if r.row_time >= tc || r.col_time >= tc || r.row_freq >= fc || r.col_freq >= fc {
            return Err(FioError::Parse("matrix index out of range".into()));
        }
        entries.push((lat.index(r.row_time, r.row_freq), lat.index(r.col_time, r.col_freq), C64::new(r.re, r.im)));
    }
    GaborMatrix::from_entries(lat, h.epsilon, h.route, &h.phase, entries)
}

#[derive(Serialize, Deserialize)]
struct ProfileHeader {
    phase: String,
    slope: f64,
    distance: String,
}

/// Binned decay profile (r_lo, r_hi, r_at_max, max_abs_entry, count).
pub fn write_profile<W: Write>(out: W, phase: &str, distance: &str, slope: f64, profile: &[ProfileBin]) -> Result<()> {
    let header = ProfileHeader { phase: phase.into(), slope, distance: distance.into() };
    write_table(out, &header, profile.iter())
}

pub fn read_profile<I: Read>(input: I) -> Result<Vec<ProfileBin>> {
    let (_, rows): (ProfileHeader, Vec<ProfileBin>) = read_table(input)?;
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
struct RatioRow {
    lambda: f64,
    norm_f: f64,
    norm_tf: f64,
    ratio: f64,
}

#[derive(Serialize, Deserialize)]
struct RatioHeader {
    phase: String,
    spec: crate::gabor::MixedNormSpec,
    slope: f64,
    intercept: f64,
    route: String,
}

/// λ, ‖f‖, ‖Tf‖ and their ratio per family member.
pub fn write_ratio_table<W: Write>(out: W, r: &NormRatioReport) -> Result<()> {
    let header = RatioHeader {
        phase: r.phase.clone(),
        spec: r.spec,
        slope: r.slope,
        intercept: r.intercept,
        route: r.route.clone(),
    };
    let rows = (0..r.lambdas.len()).map(|i| RatioRow {
        lambda: r.lambdas[i],
        norm_f: r.norm_f[i],
        norm_tf: r.norm_tf[i],
        ratio: r.ratio[i],
    });
    write_table(out, &header, rows)
}

pub fn read_ratio_table<I: Read>(input: I) -> Result<NormRatioReport> {
    let (h, rows): (RatioHeader, Vec<RatioRow>) = read_table(input)?;
    Ok(NormRatioReport {
        phase: h.phase,
        spec: h.spec,
        lambdas: rows.iter().map(|r| r.lambda).collect(),
        norm_f: rows.iter().map(|r| r.norm_f).collect(),
        norm_tf: rows.iter().map(|r| r.norm_tf).collect(),
        ratio: rows.iter().map(|r| r.ratio).collect(),
        slope: h.slope,
        intercept: h.intercept,
        route: h.route,
    })
}

/// Named columns of real numbers, for plot-ready tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn write_series<W: Write>(out: W, s: &Series) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# {}", serde_json::to_string(s)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&s.columns).map_err(csv_err)?;
    for r in &s.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series<I: Read>(input: I) -> Result<Series> {
    let (mut s, rows): (Series, Vec<Vec<f64>>) = read_table(input)?;
    if let Some(bad) = rows.iter().find(|r| r.len() != s.columns.len()) {
        return Err(FioError::ShapeMismatch { expected: s.columns.len(), found: bad.len() });
    }
    s.rows = rows;
    Ok(s)
}

/// Opens `path` for writing, creating parent directories.
pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fio::gabor_matrix_direct;
    use crate::fio::Symbol;
    use crate::gabor::{GaborSystem, MixedNormSpec, WindowKind};
    use crate::grid::{gaussian, standard_gaussian};
    use crate::phase::PhaseSpec;

    #[test]
    fn exponent_adapter() {
        let s = MixedNormSpec::new(f64::INFINITY, 1.0, 0.5).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<MixedNormSpec>(&j).unwrap(), s);
        let t: MixedNormSpec = serde_json::from_str(r#"{"p":"2","q":1,"s":0}"#).unwrap();
        assert_eq!(t.p, 2.0);
    }

    #[test]
    fn function_round_trip() {
        let g = Grid::new(2, 4.0, 8).unwrap();
        let f = gaussian(g, &[0.3, -0.2], 0.7).unwrap().function.modulate(&[1.0, 0.5]).unwrap();
        for v in [f.clone(), f.fourier_transform().unwrap()] {
            let mut buf = Vec::new();
            write_function(&mut buf, &v).unwrap();
            assert_eq!(read_function(buf.as_slice()).unwrap(), v);
        }
    }

    #[test]
    fn coefficients_and_matrix_round_trip() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let lat = Lattice::new(g, 0.5, 0.5).unwrap();
        let sys = GaborSystem::new(standard_gaussian(g), lat).unwrap();
        let c = sys.analyze(&gaussian(g, &[1.0], 1.0).unwrap().function).unwrap();
        let mut buf = Vec::new();
        write_coefficients(&mut buf, &c).unwrap();
        assert_eq!(read_coefficients(buf.as_slice()).unwrap(), c);

        let phase = PhaseSpec::Chirp { a: 1.0 }.build(1).unwrap();
        let m = gabor_matrix_direct(phase.as_ref(), &Symbol::One, &sys, WindowKind::Tight, 1e-6).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back.nnz(), m.nnz());
        assert_eq!(back.max_difference(&m).unwrap(), 0.0);
        assert_eq!(back.phase_name(), m.phase_name());
        assert_eq!(back.max_modulus(), m.max_modulus());
    }

    #[test]
    fn series_round_trip() {
        let mut s = Series::new("profile", &["t", "x", "abs"]);
        s.push(vec![0.0, -1.5, 0.25]);
        s.push(vec![1e-300, f64::INFINITY, 3.0]);
        let mut buf = Vec::new();
        write_series(&mut buf, &s).unwrap();
        assert_eq!(read_series(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(read_function("d,l\n1,2\n".as_bytes()), Err(FioError::Parse(_))));
        let bad = "# {\"d\":1,\"l\":8.0,\"n\":64,\"side\":\"time\"}\nre,im\n1,2\n";
        assert!(matches!(read_function(bad.as_bytes()), Err(FioError::ShapeMismatch { .. })));
    }
}
