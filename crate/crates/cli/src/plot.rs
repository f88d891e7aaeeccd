//! Gnuplot script and data emission for regret-vs-n3 curves.

use std::path::{Path, PathBuf};

use reconlab::{Error, Result};

use crate::io::{fmt_g9, StoredSummary};

/// Data blocks (one per method, gnuplot `index` order) and the script text.
pub fn render(rows: &[StoredSummary], data_name: &str) -> (String, String) {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.row.method.as_str()) {
            methods.push(r.row.method.as_str());
        }
    }
    let mut data = String::new();
    for (k, m) in methods.iter().enumerate() {
        if k > 0 {
            data.push_str("\n\n");
        }
        data.push_str(&format!("# {m}\n# n3,mean_regret,std_err\n"));
        let mut block: Vec<&StoredSummary> = rows.iter().filter(|r| r.row.method.as_str() == *m).collect();
        block.sort_by_key(|r| (r.row.sizes.n3, r.row.sizes.n2, r.row.sizes.n1, r.row.sizes.n4));
        for r in block {
            let err = if r.row.n_reps > 0 {
                (r.row.var_regret / r.row.n_reps as f64).sqrt()
            } else {
                0.0
            };
            data.push_str(&format!("{},{},{}\n", r.row.sizes.n3, fmt_g9(r.row.mean_regret), fmt_g9(err)));
        }
    }
    let series: Vec<String> = methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let file = if k == 0 { format!("'{data_name}'") } else { "''".to_string() };
            format!("{file} index {k} using 1:2:3 with yerrorlines title '{m}'")
        })
        .collect();
    let script = format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'n3'\n\
         set ylabel 'mean regret'\n\
         set key top right\n\
         set grid\n\
         plot {}\n",
        series.join(", \\\n     ")
    );
    (data, script)
}

/// Writes `PREFIX.csv` and `PREFIX.gp`.
pub fn render_plot(rows: &[StoredSummary], prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let base = prefix.to_string_lossy();
    let data_path = PathBuf::from(format!("{base}.csv"));
    let script_path = PathBuf::from(format!("{base}.gp"));
    let data_name = data_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (data, script) = render(rows, &data_name);
    std::fs::write(&data_path, data).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&script_path, script).map_err(|e| Error::Io(e.to_string()))?;
    Ok((data_path, script_path))
}
