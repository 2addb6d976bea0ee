//! Comparison of two run directories: spatially integrated density
//! differences and relative natural-population differences on the common
//! output times.

use std::path::Path;

use mixdyn::analysis::{density_difference, population_difference};
use ndarray::Array1;

pub struct DensitySeries {
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    pub rows: Vec<Array1<f64>>,
}

pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format!("{} is empty", path.display()))?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            format!("{}:{}: bad number: {e}", path.display(), lineno + 2)
        })?;
        if row.len() != columns.len() {
            return Err(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                lineno + 2,
                columns.len(),
                row.len()
            ));
        }
        rows.push(row);
    }
    Ok((columns, rows))
}

pub fn read_density(path: &Path) -> Result<DensitySeries, String> {
    let (columns, raw) = parse_csv(path)?;
    let points: Result<Vec<f64>, _> = columns[1..].iter().map(|c| c.parse::<f64>()).collect();
    let points = points.map_err(|e| format!("{}: bad grid header: {e}", path.display()))?;
    let mut times = Vec::with_capacity(raw.len());
    let mut rows = Vec::with_capacity(raw.len());
    for row in raw {
        times.push(row[0]);
        rows.push(Array1::from_vec(row[1..].to_vec()));
    }
    Ok(DensitySeries {
        times,
        points,
        rows,
    })
}

pub fn read_populations(path: &Path) -> Result<PopulationSeries, String> {
    let (columns, raw) = parse_csv(path)?;
    let mut times = Vec::with_capacity(raw.len());
    let mut rows = Vec::with_capacity(raw.len());
    for row in raw {
        times.push(row[0]);
        rows.push(row[1..].to_vec());
    }
    Ok(PopulationSeries {
        times,
        columns: columns[1..].to_vec(),
        rows,
    })
}

fn check_times(a: &[f64], b: &[f64], what: &str) -> Result<(), String> {
    if a.len() != b.len() {
        return Err(format!(
            "incompatible runs: {what} output counts differ ({} vs {})",
            a.len(),
            b.len()
        ));
    }
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-9 {
            return Err(format!(
                "incompatible runs: {what} output times differ ({x} vs {y})"
            ));
        }
    }
    Ok(())
}

pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    /// Relative population differences per column of populations.csv
    /// (None where the reference population is below threshold).
    pub population_columns: Vec<String>,
    pub population_deltas: Vec<Vec<Option<f64>>>,
}

impl ComparisonReport {
    pub fn max_delta_a(&self) -> (f64, f64) {
        max_with_time(&self.times, &self.delta_a)
    }

    pub fn max_delta_b(&self) -> (f64, f64) {
        max_with_time(&self.times, &self.delta_b)
    }

    pub fn max_population_delta(&self, column: &str) -> Option<(f64, f64)> {
        let idx = self.population_columns.iter().position(|c| c == column)?;
        let series: Vec<f64> = self
            .population_deltas
            .iter()
            .map(|row| row[idx].unwrap_or(0.0))
            .collect();
        Some(max_with_time(&self.times, &series))
    }
}

fn max_with_time(times: &[f64], series: &[f64]) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for (t, v) in times.iter().zip(series.iter()) {
        if *v >= best.0 {
            best = (*v, *t);
        }
    }
    best
}

/// Compare two run directories.
pub fn compare_runs(dir_c: &Path, dir_cp: &Path) -> Result<ComparisonReport, String> {
    let da_c = read_density(&dir_c.join("density_A.csv"))?;
    let da_cp = read_density(&dir_cp.join("density_A.csv"))?;
    let db_c = read_density(&dir_c.join("density_B.csv"))?;
    let db_cp = read_density(&dir_cp.join("density_B.csv"))?;
    check_times(&da_c.times, &da_cp.times, "density")?;
    check_times(&db_c.times, &db_cp.times, "density")?;
    if da_c.points.len() != da_cp.points.len() {
        return Err("incompatible runs: grids differ".into());
    }
    for (x, y) in da_c.points.iter().zip(da_cp.points.iter()) {
        if (x - y).abs() > 1e-9 {
            return Err("incompatible runs: grids differ".into());
        }
    }
    let spacing = da_c.points[1] - da_c.points[0];
    // particle numbers from the initial densities
    let n_a: f64 = da_c.rows[0].sum() * spacing;
    let n_b: f64 = db_c.rows[0].sum() * spacing;

    let mut delta_a = Vec::with_capacity(da_c.times.len());
    let mut delta_b = Vec::with_capacity(db_c.times.len());
    for i in 0..da_c.times.len() {
        delta_a.push(
            density_difference(&da_c.rows[i].view(), &da_cp.rows[i].view(), n_a, spacing)
                .map_err(|e| e.to_string())?,
        );
        delta_b.push(
            density_difference(&db_c.rows[i].view(), &db_cp.rows[i].view(), n_b, spacing)
                .map_err(|e| e.to_string())?,
        );
    }

    let pop_c = read_populations(&dir_c.join("populations.csv"))?;
    let pop_cp = read_populations(&dir_cp.join("populations.csv"))?;
    check_times(&pop_c.times, &pop_cp.times, "population")?;
    // compare only columns present in both runs (truncations may differ)
    let mut shared = Vec::new();
    for (idx_c, name) in pop_c.columns.iter().enumerate() {
        if let Some(idx_cp) = pop_cp.columns.iter().position(|c| c == name) {
            shared.push((name.clone(), idx_c, idx_cp));
        }
    }
    let mut deltas = Vec::with_capacity(pop_c.times.len());
    for i in 0..pop_c.times.len() {
        let mut row = Vec::with_capacity(shared.len());
        for (_, idx_c, idx_cp) in &shared {
            row.push(population_difference(
                pop_c.rows[i][*idx_c],
                pop_cp.rows[i][*idx_cp],
            ));
        }
        deltas.push(row);
    }

    Ok(ComparisonReport {
        times: da_c.times,
        delta_a,
        delta_b,
        population_columns: shared.into_iter().map(|(n, _, _)| n).collect(),
        population_deltas: deltas,
    })
}

/// Write the comparison series as CSV and return a human-readable summary.
pub fn write_report(report: &ComparisonReport, out: &Path) -> Result<String, String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let path = out.join("compare.csv");
    let mut text = String::from("t,delta_A,delta_B");
    for c in &report.population_columns {
        text += &format!(",d{c}");
    }
    text += "\n";
    for i in 0..report.times.len() {
        text += &format!(
            "{:.9},{:.12e},{:.12e}",
            report.times[i], report.delta_a[i], report.delta_b[i]
        );
        for v in &report.population_deltas[i] {
            match v {
                Some(x) => text += &format!(",{x:.12e}"),
                None => text += &",".to_string(),
            }
        }
        text += "\n";
    }
    std::fs::write(&path, text).map_err(|e| e.to_string())?;

    let (ma, ta) = report.max_delta_a();
    let (mb, tb) = report.max_delta_b();
    let mut summary = format!(
        "max delta_A = {ma:.6e} at t = {ta:.4}\nmax delta_B = {mb:.6e} at t = {tb:.4}\n"
    );
    for c in &report.population_columns {
        if let Some((m, t)) = report.max_population_delta(c) {
            summary += &format!("max d{c} = {m:.6e} at t = {t:.4}\n");
        }
    }
    Ok(summary)
}
