use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::protocol::ProtocolReport;
use super::sweep::Series;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `mean±std` grid, one row per (metric, method), one column per feature.
    Table,
    /// `x,y,err` rows along the series axis.
    PlotData,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "plot-data" | "plot" => Ok(ReportFormat::PlotData),
            o => Err(Error::InvalidParameter(format!("unknown report format `{o}` (table, plot-data)"))),
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Table => "table.csv",
            ReportFormat::PlotData => "plot.csv",
        }
    }
}

fn first_seen(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn render_table<'a>(reports: impl IntoIterator<Item = &'a ProtocolReport>) -> String {
    let reports: Vec<&ProtocolReport> = reports.into_iter().collect();
    let features = first_seen(reports.iter().map(|r| r.spec.feature.family().to_string()));
    let rows = first_seen(
        reports
            .iter()
            .map(|r| format!("{},{}", r.metric.name(), r.spec.family.id())),
    );
    let mut s = String::from("metric,method");
    for f in &features {
        s.push(',');
        s.push_str(f);
    }
    s.push('\n');
    for row in &rows {
        s.push_str(row);
        for f in &features {
            s.push(',');
            if let Some(r) = reports
                .iter()
                .find(|r| format!("{},{}", r.metric.name(), r.spec.family.id()) == *row && r.spec.feature.family() == f)
            {
                write!(s, "{:.6}±{:.6}", r.mean, r.std).expect("string write");
            }
        }
        s.push('\n');
    }
    s
}

/// Table for a series; non-trivial axes get a leading column per point.
pub fn render_series_table(series: &Series) -> String {
    if series.axis == "run" {
        return render_table(series.reports());
    }
    let mut s = String::new();
    for (i, p) in series.points.iter().enumerate() {
        let t = render_table([&p.report]);
        let mut lines = t.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            writeln!(s, "{},{header}", series.axis).expect("string write");
        }
        for l in lines {
            writeln!(s, "{},{l}", p.x).expect("string write");
        }
    }
    s
}

pub fn render_plot_data(series: &Series) -> String {
    let mut s = format!("# axis={}\nx,y,err\n", series.axis);
    for p in &series.points {
        writeln!(s, "{},{:.6},{:.6}", p.x, p.report.mean, p.report.std).expect("string write");
    }
    s
}

/// Writes the rendered series, `series.json` and one JSON file per report
/// into `dir`.
pub fn emit_report(series: &Series, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if series.points.is_empty() {
        return Err(Error::InvalidInput("no reports to emit".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let body = match format {
        ReportFormat::Table => render_series_table(series),
        ReportFormat::PlotData => render_plot_data(series),
    };
    let mut written = vec![write(&dir.join(format.file_name()), &body)?];
    let mut all = serde_json::to_string_pretty(series)?;
    all.push('\n');
    written.push(write(&dir.join("series.json"), &all)?);
    for (i, p) in series.points.iter().enumerate() {
        let safe: String = p
            .x
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        written.push(write(&dir.join(format!("report-{i:03}-{safe}.json")), &p.report.to_json()?)?);
    }
    Ok(written)
}

fn write(path: &Path, body: &str) -> Result<PathBuf> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// `<root>/<name>/{spec, reports, caches}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, name: &str) -> Result<Self> {
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(Error::InvalidParameter(format!("invalid run name `{name}`")));
        }
        let d = RunDir {
            path: root.join(name),
        };
        for sub in [d.spec_dir(), d.reports_dir(), d.caches_dir()] {
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        Ok(d)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn spec_dir(&self) -> PathBuf {
        self.path.join("spec")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.path.join("reports")
    }

    pub fn caches_dir(&self) -> PathBuf {
        self.path.join("caches")
    }
}
