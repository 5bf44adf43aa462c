//! Output-directory plumbing: file writers and the optional gnuplot
//! rendering script.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        let mut json = serde_json::to_string_pretty(value).expect("value serializes");
        json.push('\n');
        self.write_bytes(name, json.as_bytes())
    }

    pub fn write_with<F>(&self, name: &str, f: F) -> std::io::Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let mut buf: Vec<u8> = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }
}

/// Gnuplot script rendering the sweep outputs; optional convenience for
/// external plotting.
pub fn sweep_plot_script() -> String {
    "# gnuplot script: render the sweep CSVs\n\
     set datafile separator ','\n\
     set terminal pngcairo size 900,700\n\
     set logscale x\n\
     set xlabel 'step-size alpha'\n\
     set ylabel 'momentum beta'\n\
     set output 'rate_map.png'\n\
     set title 'empirical convergence rate (blank = diverged)'\n\
     plot 'grid.csv' skip 1 using 1:2:6 with points pt 5 ps 1.6 palette notitle, \\\n\
     \t'contour.csv' skip 1 using 1:2 with points pt 7 ps 0.4 lc rgb 'red' title 'rho = 1'\n\
     set output 'neighborhood_map.png'\n\
     set title 'empirical noise neighborhood / sigma'\n\
     plot 'grid.csv' skip 1 using 1:2:7 with points pt 5 ps 1.6 palette notitle, \\\n\
     \t'contour.csv' skip 1 using 1:2 with points pt 7 ps 0.4 lc rgb 'red' title 'rho = 1'\n"
        .to_string()
}

/// Gnuplot script for divergence traces.
pub fn counterexample_plot_script(n_values: &[usize]) -> String {
    let mut s = String::from(
        "# gnuplot script: switched-axis traces of the divergence example\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,500\n\
         set xlabel 'iteration'\n\
         set ylabel '|y - x*| along the switched axis'\n\
         set logscale y\n",
    );
    for n in n_values {
        s.push_str(&format!(
            "set output 'trace_n{n}.png'\nset title 'n = {n}'\n\
             plot 'traces/trace_n{n}.csv' skip 1 using 1:(abs($2)) with lines lw 1.5 title 'coordinate', \\\n\
             \t'traces/trace_n{n}.csv' skip 1 using ($3 == {} ? $1 : 1/0):(abs($2)) with points pt 7 lc rgb 'red' title 'inconsistent batch'\n",
            n - 1
        ));
    }
    s
}

/// Gnuplot script for the finite-sum bound comparison.
pub fn sgdfs_plot_script(q_values: &[f64]) -> String {
    let mut s = String::from(
        "# gnuplot script: distance vs bound for the finite-sum experiment\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,500\n\
         set xlabel 'iteration'\n\
         set ylabel 'mean distance to the minimizer'\n\
         set logscale y\n",
    );
    for q in q_values {
        s.push_str(&format!(
            "set output 'bounds_q{q}.png'\nset title 'Q = {q}'\n\
             plot 'bounds_q{q}.csv' skip 1 using 1:2 with lines lw 1.6 title 'empirical', \\\n\
             \t'bounds_q{q}.csv' skip 1 using 1:3 with lines dashtype 2 lw 1.6 title 'bound'\n"
        ));
    }
    s
}

/// Gnuplot script for the logistic-regression sweep.
pub fn logreg_plot_script() -> String {
    "# gnuplot script: fitted rates of the logistic-regression sweep\n\
     set datafile separator ','\n\
     set terminal pngcairo size 900,700\n\
     set logscale x\n\
     set xlabel 'step-size alpha'\n\
     set ylabel 'momentum beta'\n\
     set output 'logreg_rates.png'\n\
     set title 'fitted convergence rate'\n\
     plot 'grid.csv' skip 1 using 1:2:3 with points pt 5 ps 2 palette notitle\n"
        .to_string()
}
