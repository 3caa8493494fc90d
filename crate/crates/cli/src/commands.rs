use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use spectral_huber::llr::LocalLowRank;
use spectral_huber::model::archive::{load_problem, read_complex, read_matrix, save_problem, write_complex, write_matrix, ComplexArray};
use spectral_huber::model::generate_synthetic;
use spectral_huber::solvers::{
    default_lambda, dist_to_limit, fista_pa_solve, matched_nuclear_weight, ncg_solve, nrmse, pogm_pa_solve,
    read_log_csv, write_log_csv, Method,
};
use spectral_huber::{CMatrix, Curvature, Error, SpectralRegularizer};

use crate::config::ExperimentConfig;
use crate::CliError;

const PROBLEM_FILES: [&str; 4] = ["meta", "coils", "masks", "kspace"];

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn required<'a>(v: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    v.as_deref().ok_or_else(|| CliError::Config(format!("'{key}' is required")))
}

/// SHA-256 over the files that define the measurements, so runs can be
/// checked to come from the same problem.
pub fn problem_fingerprint(dir: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for name in PROBLEM_FILES {
        let path = dir.join(name);
        h.update(io(&path, fs::read(&path))?);
    }
    Ok(h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub fn generate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let out = required(&cfg.output, "output")?;
    let syn = cfg.synthetic();
    // reject bad patch sizes before spending time on the problem
    cfg.geometry(syn.image)?;
    let problem = generate_synthetic(&syn)?;
    save_problem(out, &problem, &syn)?;
    println!(
        "wrote {}: {}x{} image, {} frames, {} coils, sampling fraction {:.3}, fingerprint {}",
        out.display(),
        syn.image[0],
        syn.image[1],
        syn.frames,
        syn.coils,
        problem.operator.sampling_fraction(),
        problem_fingerprint(out)?
    );
    Ok(())
}

fn default_label(cfg: &ExperimentConfig) -> String {
    let mut label = cfg.method.to_lowercase();
    if cfg.k.is_some() {
        label.push_str("-tail");
    }
    if cfg.fast_step {
        label.push_str("-fast");
    }
    if matches!(cfg.curvature.parse(), Ok(Curvature::GL)) {
        label.push_str("-gl");
    }
    label
}

pub fn reconstruct(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let problem_dir = required(&cfg.problem, "problem")?;
    let out = required(&cfg.output, "output")?;
    let (problem, meta) = load_problem(problem_dir)?;
    let geom = cfg.geometry(meta.image)?;
    let pot = cfg.potential()?;
    let plain = LocalLowRank::new(SpectralRegularizer::plain(pot), geom.clone());
    let llr = match cfg.k {
        Some(k) => LocalLowRank::new(SpectralRegularizer::tail(pot, geom.patch_rank(meta.frames), k)?, geom.clone()),
        None => plain.clone(),
    };
    let x0 = problem.datashare_init()?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => default_lambda(&problem, &plain, &x0)?,
    };
    let solver = cfg.solver(lambda)?;
    let output = match solver.method {
        Method::Ncg => ncg_solve(&problem, &llr, &solver, &x0)?,
        method => {
            if cfg.k.is_some() {
                log::warn!("K is ignored by {method}: the baselines use the patch nuclear norm");
            }
            let pa = spectral_huber::solvers::SolverConfig { lambda: matched_nuclear_weight(&pot, lambda), ..solver.clone() };
            if method == Method::FistaPa {
                fista_pa_solve(&problem, &geom, &pa, &x0)?
            } else {
                pogm_pa_solve(&problem, &geom, &pa, &x0)?
            }
        }
    };

    io(out, fs::create_dir_all(out))?;
    write_matrix(&out.join("recon"), &output.x)?;
    let log_path = out.join("log.csv");
    let mut buf = Vec::new();
    io(&log_path, write_log_csv(&mut buf, &output.log))?;
    io(&log_path, fs::write(&log_path, buf))?;
    if !output.iterates.is_empty() {
        let slices: Vec<CMatrix> = output.iterates.iter().map(|(_, x)| x.clone()).collect();
        write_complex(&out.join("iterates"), &ComplexArray::from_slices(&slices))?;
        let idx: String = output.iterates.iter().map(|(k, _)| format!("{k}\n")).collect();
        io(out, fs::write(out.join("iterates.idx"), idx))?;
    }
    let effective = ExperimentConfig { lambda: Some(lambda), ..cfg.clone() };
    io(out, fs::write(out.join("config.toml"), effective.to_toml()))?;

    let last = output.final_record();
    let label = cfg.label.clone().unwrap_or_else(|| default_label(cfg));
    let mut summary = String::new();
    let _ = writeln!(summary, "label = {label}");
    let _ = writeln!(summary, "method = {}", solver.method);
    let _ = writeln!(summary, "lambda = {lambda:e}");
    let _ = writeln!(summary, "iterations = {}", last.iter);
    let _ = writeln!(summary, "final_cost = {:e}", last.cost);
    let _ = writeln!(summary, "final_gradnorm = {:e}", last.grad_norm);
    if let Some(e) = last.nrmse {
        let _ = writeln!(summary, "final_nrmse = {e:e}");
    }
    let _ = writeln!(summary, "seconds = {:e}", last.seconds);
    let _ = writeln!(summary, "seconds_per_iter = {:e}", output.seconds_per_iter());
    let _ = writeln!(summary, "cost_increases = {}", output.cost_increases);
    let _ = writeln!(summary, "converged = {}", output.converged);
    let _ = writeln!(summary, "problem_sha256 = {}", problem_fingerprint(problem_dir)?);
    io(out, fs::write(out.join("summary"), &summary))?;
    if solver.method == Method::Ncg && !solver.fast_step && output.cost_increases > 0 {
        log::warn!("cost increased {} times with exact step sizes", output.cost_increases);
    }
    println!(
        "{label}: {} iterations, cost {:.6e}, nrmse {}, {:.2} s",
        last.iter,
        last.cost,
        last.nrmse.map_or("n/a".to_string(), |e| format!("{e:.4}")),
        last.seconds
    );
    Ok(())
}

fn read_summary(dir: &Path) -> Result<HashMap<String, String>, CliError> {
    let path = dir.join("summary");
    let text = io(&path, fs::read_to_string(&path))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Long-format CSV `method,iter,cost,nrmse,dist` over several runs of the
/// same problem. `dist` is the normalized squared distance of each stored
/// iterate to that run's final iterate; it is empty for iterations that were
/// not stored.
pub fn compare(runs: &[std::path::PathBuf], output: Option<&Path>) -> Result<(), CliError> {
    let mut csv = String::from("method,iter,cost,nrmse,dist\n");
    let mut fingerprint: Option<String> = None;
    for dir in runs {
        let summary = read_summary(dir)?;
        let fp = summary
            .get("problem_sha256")
            .ok_or_else(|| CliError::Config(format!("{}: summary has no problem_sha256", dir.display())))?;
        match &fingerprint {
            None => fingerprint = Some(fp.clone()),
            Some(f) if f != fp => {
                return Err(Error::ProblemMismatch(format!("{} was run on a different problem", dir.display())).into());
            }
            Some(_) => {}
        }
        let label = summary.get("label").cloned().unwrap_or_else(|| dir.display().to_string());
        let log_path = dir.join("log.csv");
        let log = read_log_csv(&io(&log_path, fs::read_to_string(&log_path))?)?;
        let limit = read_matrix(&dir.join("recon"))?;
        let mut dist = BTreeMap::new();
        let idx_path = dir.join("iterates.idx");
        if idx_path.exists() {
            let iterates = read_complex(&dir.join("iterates"))?;
            let idx = io(&idx_path, fs::read_to_string(&idx_path))?;
            for (d, line) in idx.lines().enumerate() {
                let k: usize = line
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad iteration '{line}' in {}", idx_path.display())))?;
                if d >= iterates.depth {
                    return Err(Error::Format(format!("{} lists more iterates than stored", idx_path.display())).into());
                }
                dist.insert(k, dist_to_limit(&iterates.slice(d), &limit)?);
            }
        }
        for r in &log {
            let _ = writeln!(
                csv,
                "{label},{},{:e},{},{}",
                r.iter,
                r.cost,
                r.nrmse.map(|v| format!("{v:e}")).unwrap_or_default(),
                dist.get(&r.iter).map(|v| format!("{v:e}")).unwrap_or_default()
            );
        }
    }
    match output {
        Some(path) => io(path, fs::write(path, csv))?,
        None => io(Path::new("stdout"), std::io::stdout().write_all(csv.as_bytes()))?,
    }
    Ok(())
}

pub fn metrics(problem: &Path, recon: &Path, limit: Option<&Path>) -> Result<(), CliError> {
    let (p, _) = load_problem(problem)?;
    let x = read_matrix(recon)?;
    let truth = p
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{} has no ground truth", problem.display())))?;
    println!("nrmse = {:e}", nrmse(&x, truth)?);
    if let Some(l) = limit {
        println!("dist = {:e}", dist_to_limit(&x, &read_matrix(l)?)?);
    }
    Ok(())
}

