//! CSV, JSON and SVG files.
//!
//! Point files hold one sample per row: coordinates first, then optionally a mass
//! column and a label column. A header row is recognized when its first field is
//! not a number; its `weight` / `label` columns (several spellings accepted) are
//! picked out by name. Without a header every column is a coordinate unless the
//! dimension is given, in which case the next columns are mass and label.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! written file reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{CentroidSet, Domain, EmpiricalMeasure};
use crate::power_diagram::{build_power_diagram_2d, PowerDiagram, TransportPlan};
use crate::vot::TraceRecord;

const WEIGHT_NAMES: [&str; 5] = ["weight", "w", "mass", "capacity", "nu"];
const LABEL_NAMES: [&str; 3] = ["label", "class", "target"];

/// Rows of a point file.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl PointTable {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalized measure; missing masses mean uniform.
    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        match &self.weights {
            Some(w) => EmpiricalMeasure::new(self.dim, self.coords.clone(), w.clone())?.normalize(),
            None => EmpiricalMeasure::uniform(self.dim, self.coords.clone()),
        }
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Format("point file has no label column".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Coord,
    Weight,
    Label,
}

fn parse_number(field: &str, line: u64, source: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Format(format!("{source}: line {line}: cannot parse '{field}' as a number"))
    })
}

fn header_layout(header: &csv::StringRecord, dim: Option<usize>) -> Result<Vec<Column>> {
    let layout: Vec<Column> = header
        .iter()
        .map(|name| {
            let name = name.trim().to_ascii_lowercase();
            if WEIGHT_NAMES.contains(&name.as_str()) {
                Column::Weight
            } else if LABEL_NAMES.contains(&name.as_str()) {
                Column::Label
            } else {
                Column::Coord
            }
        })
        .collect();
    let coords = layout.iter().filter(|c| **c == Column::Coord).count();
    if let Some(d) = dim {
        if d != coords {
            return Err(Error::DimensionMismatch { expected: d, found: coords });
        }
    }
    Ok(layout)
}

fn positional_layout(width: usize, dim: Option<usize>) -> Result<Vec<Column>> {
    let Some(d) = dim else {
        return Ok(vec![Column::Coord; width]);
    };
    let mut layout = vec![Column::Coord; d.min(width)];
    match width.checked_sub(d) {
        Some(0) => {}
        Some(1) => layout.push(Column::Weight),
        Some(2) => layout.extend([Column::Weight, Column::Label]),
        _ => {
            return Err(Error::Format(format!(
                "{width} columns do not fit dimension {d} (expected {d} to {} columns)",
                d + 2
            )))
        }
    }
    Ok(layout)
}

/// Parses point rows from any reader; `source` names it in error messages.
pub fn read_points_from<R: std::io::Read>(reader: R, dim: Option<usize>, source: &str) -> Result<PointTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut layout: Option<Vec<Column>> = None;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let cols = match &layout {
            Some(l) => l,
            None => {
                let is_header = record.get(0).is_some_and(|f| f.parse::<f64>().is_err());
                let l = if is_header {
                    header_layout(&record, dim)?
                } else {
                    positional_layout(record.len(), dim)?
                };
                layout = Some(l);
                if is_header {
                    continue;
                }
                layout.as_ref().expect("just set")
            }
        };
        if record.len() != cols.len() {
            return Err(Error::Format(format!(
                "{source}: line {line}: expected {} fields, found {}",
                cols.len(),
                record.len()
            )));
        }
        for (field, col) in record.iter().zip(cols) {
            match col {
                Column::Coord => coords.push(parse_number(field, line, source)?),
                Column::Weight => weights.push(parse_number(field, line, source)?),
                Column::Label => labels.push(field.parse::<usize>().map_err(|_| {
                    Error::Format(format!("{source}: line {line}: label '{field}' is not a class index"))
                })?),
            }
        }
    }
    let Some(layout) = layout else {
        return Err(Error::Format(format!("{source}: no data rows")));
    };
    let dim = layout.iter().filter(|c| **c == Column::Coord).count();
    if dim == 0 || coords.is_empty() {
        return Err(Error::Format(format!("{source}: no coordinate data")));
    }
    Ok(PointTable {
        dim,
        coords,
        weights: layout.contains(&Column::Weight).then_some(weights),
        labels: layout.contains(&Column::Label).then_some(labels),
    })
}

pub fn read_points(path: &Path, dim: Option<usize>) -> Result<PointTable> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    read_points_from(file, dim, &path.display().to_string())
}

/// Centroid file: positions plus an optional capacity column. Without capacities
/// (and without `nu`) the capacities are uniform.
pub fn read_centroids(path: &Path, dim: Option<usize>, nu: Option<Vec<f64>>) -> Result<CentroidSet> {
    let table = read_points(path, dim)?;
    let capacities = match (nu, table.weights) {
        (Some(nu), _) => nu,
        (None, Some(w)) => {
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidMeasure("capacities must have positive total".into()));
            }
            w.iter().map(|v| v / total).collect()
        }
        (None, None) => return CentroidSet::uniform(table.dim, table.coords),
    };
    CentroidSet::new(table.dim, table.coords, capacities)
}

/// Capacity vector from a file with one value per row (a header is allowed).
pub fn read_capacities(path: &Path) -> Result<Vec<f64>> {
    let source = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{source}: {e}")))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let field = line.trim();
        if field.is_empty() || (values.is_empty() && idx == 0 && field.parse::<f64>().is_err()) {
            continue;
        }
        if field.contains(',') {
            return Err(Error::Format(format!("{source}: line {}: expected a single column", idx + 1)));
        }
        values.push(parse_number(field, idx as u64 + 1, &source)?);
    }
    Ok(values)
}

fn header_row(dim: usize, weights: bool, labels: bool) -> String {
    let mut cols: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
    if weights {
        cols.push("weight".into());
    }
    if labels {
        cols.push("label".into());
    }
    cols.join(",")
}

/// Points with their masses and, if given, labels.
pub fn points_csv(m: &EmpiricalMeasure, labels: Option<&[usize]>) -> Result<String> {
    if let Some(l) = labels {
        if l.len() != m.len() {
            return Err(Error::LengthMismatch { expected: m.len(), found: l.len() });
        }
    }
    let mut out = header_row(m.dim(), true, labels.is_some());
    out.push('\n');
    for (i, (p, w)) in m.points().zip(m.weights()).enumerate() {
        for v in p {
            write!(out, "{v},").expect("writing to a String");
        }
        write!(out, "{w}").expect("writing to a String");
        if let Some(l) = labels {
            write!(out, ",{}", l[i]).expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Centroid positions, capacities and optional labels.
pub fn centroids_csv(y: &CentroidSet, labels: Option<&[usize]>) -> String {
    let mut out = header_row(y.dim(), false, false);
    out.push_str(",capacity");
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for j in 0..y.len() {
        for v in y.position(j) {
            write!(out, "{v},").expect("writing to a String");
        }
        write!(out, "{}", y.capacities()[j]).expect("writing to a String");
        if let Some(l) = labels {
            write!(out, ",{}", l[j]).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn plan_csv(plan: &TransportPlan) -> String {
    let mut out = String::from("sample,cell\n");
    for (i, j) in plan.assignment.iter().enumerate() {
        writeln!(out, "{i},{j}").expect("writing to a String");
    }
    out
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iter,energy,grad_inf_norm,step\n");
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iter, r.energy, r.grad_inf_norm, r.step).expect("writing to a String");
    }
    out
}

pub fn objective_csv(trace: &[f64]) -> String {
    let mut out = String::from("iter,objective\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{i},{v}").expect("writing to a String");
    }
    out
}

pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::from("sample,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i},{l}").expect("writing to a String");
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    pub size: u32,
    pub draw_samples: bool,
    /// Colour cells by these class indices instead of by cell index.
    pub classes: Option<Vec<usize>>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self { size: 800, draw_samples: true, classes: None }
    }
}

const CLASS_COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn cell_color(j: usize, classes: Option<&[usize]>) -> String {
    match classes {
        Some(c) => CLASS_COLORS[c[j] % CLASS_COLORS.len()].to_string(),
        None => {
            let hue = (j as f64 * 137.507_764) % 360.0;
            format!("hsl({hue:.1},60%,75%)")
        }
    }
}

/// Diagram over the padded bounding box of the samples and centroids.
pub fn diagram_for(m: &EmpiricalMeasure, y: &CentroidSet, h: &[f64]) -> Result<PowerDiagram> {
    if m.dim() != 2 || y.dim() != 2 {
        return Err(Error::UnsupportedMode(format!("rendering needs 2D data, got {}D", m.dim())));
    }
    let (mut lo, mut hi) = m.bounding_box();
    for j in 0..y.len() {
        for d in 0..2 {
            lo[d] = lo[d].min(y.position(j)[d]);
            hi[d] = hi[d].max(y.position(j)[d]);
        }
    }
    build_power_diagram_2d(y, h, &Domain::bounding_polygon(&lo, &hi, 0.05)?)
}

/// SVG with layers in fixed order: cells, samples, facets, centroids. Every cell
/// gets a `polygon` element (empty cells have no points) so that the element
/// counts equal `k`.
pub fn render_svg(
    diagram: &PowerDiagram,
    y: &CentroidSet,
    samples: Option<&EmpiricalMeasure>,
    options: &SvgOptions,
) -> Result<String> {
    if y.dim() != 2 || samples.is_some_and(|m| m.dim() != 2) {
        return Err(Error::UnsupportedMode("rendering needs 2D data".into()));
    }
    if diagram.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: diagram.len() });
    }
    if let Some(c) = &options.classes {
        if c.len() != y.len() {
            return Err(Error::LengthMismatch { expected: y.len(), found: c.len() });
        }
    }
    let poly = diagram
        .domain
        .polygon()
        .ok_or_else(|| Error::UnsupportedMode("rendering needs a polygonal domain".into()))?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &poly {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let size = options.size.max(16) as f64;
    let margin = 0.02 * size;
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (size - 2.0 * margin) / span;
    let map = |p: [f64; 2]| (margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale);
    let classes = options.classes.as_deref();

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = options.size.max(16)
    )
    .expect("writing to a String");
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g id=\"cells\">\n");
    for cell in &diagram.cells {
        let pts: Vec<String> = cell
            .polygon
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            r#"<polygon class="cell" data-index="{}" points="{}" fill="{}" fill-opacity="0.6"/>"#,
            cell.index,
            pts.join(" "),
            cell_color(cell.index, classes)
        )
        .expect("writing to a String");
    }
    out.push_str("</g>\n<g id=\"samples\">\n");
    if let (Some(m), true) = (samples, options.draw_samples) {
        let r = (size / 400.0).max(0.8);
        for p in m.points() {
            let (x, y) = map([p[0], p[1]]);
            writeln!(out, r##"<circle class="sample" cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="#808080"/>"##)
                .expect("writing to a String");
        }
    }
    out.push_str("</g>\n<g id=\"facets\">\n");
    for cell in &diagram.cells {
        for f in cell.facets.iter().filter(|f| f.neighbor > cell.index) {
            let (x1, y1) = map(f.endpoints[0]);
            let (x2, y2) = map(f.endpoints[1]);
            writeln!(
                out,
                r#"<line class="facet" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="1"/>"#
            )
            .expect("writing to a String");
        }
    }
    out.push_str("</g>\n<g id=\"centroids\">\n");
    let r = (size / 160.0).max(2.0);
    for j in 0..y.len() {
        let p = y.position(j);
        let (x, yy) = map([p[0], p[1]]);
        let fill = match classes {
            Some(c) => CLASS_COLORS[c[j] % CLASS_COLORS.len()].to_string(),
            None => "black".to_string(),
        };
        writeln!(
            out,
            r#"<circle class="centroid" data-index="{j}" cx="{x:.2}" cy="{yy:.2}" r="{r:.2}" fill="{fill}" stroke="white"/>"#
        )
        .expect("writing to a String");
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection_and_columns() {
        let t = read_points_from("x,y,weight,label\n0,1,2,1\n3,4,2,0\n".as_bytes(), None, "t").unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.coords, vec![0.0, 1.0, 3.0, 4.0]);
        assert_eq!(t.weights, Some(vec![2.0, 2.0]));
        assert_eq!(t.labels, Some(vec![1, 0]));
        let m = t.measure().unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn headerless_with_and_without_dim() {
        let data = "0,1,0.5\n2,3,0.5\n";
        let t = read_points_from(data.as_bytes(), None, "t").unwrap();
        assert_eq!((t.dim, t.weights.is_none()), (3, true));
        let t = read_points_from(data.as_bytes(), Some(2), "t").unwrap();
        assert_eq!((t.dim, t.weights), (2, Some(vec![0.5, 0.5])));
        assert!(read_points_from(data.as_bytes(), Some(5), "t").is_err());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let err = read_points_from("1,2\n3,abc\n".as_bytes(), None, "t.csv").unwrap_err();
        assert!(err.to_string().contains("t.csv: line 2"), "{err}");
        assert!(read_points_from("1,2\n3\n".as_bytes(), None, "t").is_err());
        assert!(read_points_from("".as_bytes(), None, "t").is_err());
    }

    #[test]
    fn points_round_trip_exactly() {
        let m = EmpiricalMeasure::new(2, vec![0.1, 1.0 / 3.0, -2.5e-17, 1e300], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let text = points_csv(&m, Some(&[0, 1])).unwrap();
        let t = read_points_from(text.as_bytes(), None, "t").unwrap();
        assert_eq!(t.coords, m.coords());
        assert_eq!(t.weights.as_deref(), Some(m.weights()));
        assert_eq!(t.labels, Some(vec![0, 1]));
    }

    #[test]
    fn centroid_capacities_from_file() {
        let y = CentroidSet::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0.25, 0.75]).unwrap();
        let text = centroids_csv(&y, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        fs::write(&path, text).unwrap();
        assert_eq!(read_centroids(&path, None, None).unwrap(), y);
    }

    #[test]
    fn single_cell_svg() {
        let m = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let y = CentroidSet::uniform(2, vec![0.5, 0.5]).unwrap();
        let d = diagram_for(&m, &y, &[0.0]).unwrap();
        let svg = render_svg(&d, &y, Some(&m), &SvgOptions::default()).unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 1);
        assert_eq!(svg.matches("class=\"centroid\"").count(), 1);
        assert_eq!(svg.matches("class=\"sample\"").count(), 2);
        assert_eq!(svg, render_svg(&d, &y, Some(&m), &SvgOptions::default()).unwrap());
    }

    #[test]
    fn render_rejects_3d() {
        let m = EmpiricalMeasure::uniform(3, vec![0.0; 3]).unwrap();
        let y = CentroidSet::uniform(3, vec![0.0; 3]).unwrap();
        assert!(matches!(diagram_for(&m, &y, &[0.0]), Err(Error::UnsupportedMode(_))));
    }
}
