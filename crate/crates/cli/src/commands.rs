use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pim_core::assembly::symmetrizer;
use pim_core::bench::{
    gauge_fixed_l2_error, run_convergence, sample_circle, sample_disk_random, solve_problem, weighted_l2_error,
    BoundaryKind, CaseOptions, ConvergenceReport, Geometry, TestCase,
};
use pim_core::cloud::{load_cloud, save_cloud, select_bandwidth_adaptive, select_bandwidth_global};
use pim_core::kernel::{verify_assumptions, DEFAULT_GAUSSIAN_TRUNCATION};
use pim_core::solve::solve_eigs;
use pim_core::tv::{
    extract_patches, load_pgm, mask_from_image, nearest_sample_fill, psnr, random_mask, rmse, tv_inpaint, GrayImage,
    TVOptions, DEFAULT_PATCH_SIZE,
};
use pim_core::{Assembler, Bandwidth, KernelFamily, KernelSpec, PimError, PointCloud, ProblemSpec, SolveOptions};

use crate::config::{RunConfig, Settings};
use crate::CliError;

const DEFAULT_KNN: usize = 10;

pub fn dispatch(config: &RunConfig) -> Result<(), CliError> {
    match config.command.as_str() {
        "sample" => cmd_sample(config),
        "solve" => cmd_solve(config),
        "eig" => cmd_eig(config),
        "converge" => cmd_converge(config),
        "inpaint" => cmd_inpaint(config),
        "verify-kernel" => cmd_verify_kernel(config),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

fn write_output(config: &RunConfig, name: &str, body: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    let path = config.out.join(name);
    let mut text = String::new();
    for line in config.header() {
        let _ = writeln!(text, "# {line}");
    }
    text.push_str(body);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn out_path(config: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    Ok(config.out.join(name))
}

/// Round-trip float formatting.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn boundary_kind(s: &Settings) -> Result<BoundaryKind, CliError> {
    match s.boundary.kind.as_deref().unwrap_or("neumann") {
        "neumann" => Ok(BoundaryKind::Neumann),
        "dirichlet" => Ok(BoundaryKind::Dirichlet),
        "robin" => Ok(BoundaryKind::Robin(s.boundary.beta.unwrap_or(1.0))),
        other => Err(CliError::Usage(format!(
            "unknown boundary type {other} (neumann, dirichlet, robin)"
        ))),
    }
}

fn kernel_family(s: &Settings) -> Result<KernelFamily, CliError> {
    s.kernel
        .family
        .as_deref()
        .unwrap_or("gaussian")
        .parse()
        .map_err(CliError::Usage)
}

fn kernel_for(cloud: &PointCloud, s: &Settings) -> Result<KernelSpec, CliError> {
    let knn = s.kernel.knn.unwrap_or(DEFAULT_KNN);
    let bandwidth = match (s.kernel.t, s.kernel.adaptive.unwrap_or(false)) {
        (Some(t), _) => Bandwidth::Global(t),
        (None, true) => select_bandwidth_adaptive(cloud, knn)?,
        (None, false) => select_bandwidth_global(cloud, knn)?,
    };
    bandwidth.validate(cloud.len())?;
    Ok(KernelSpec::new(kernel_family(s)?, bandwidth, cloud.intrinsic_dim())
        .with_truncation(s.kernel.truncation.unwrap_or(DEFAULT_GAUSSIAN_TRUNCATION)))
}

fn solve_options(s: &Settings) -> Result<SolveOptions, CliError> {
    let d = SolveOptions::default();
    let o = SolveOptions {
        rel_tol: s.solver.rel_tol.unwrap_or(d.rel_tol),
        max_iter: s.solver.max_iter.or(d.max_iter),
        gmres_restart: s.solver.gmres_restart.unwrap_or(d.gmres_restart),
        alm_beta: s.solver.alm_beta.unwrap_or(d.alm_beta),
        alm_tol: s.solver.alm_tol.unwrap_or(d.alm_tol),
        alm_max_outer: s.solver.alm_max_outer.unwrap_or(d.alm_max_outer),
        alm_inner_tol: d.alm_inner_tol,
        eig_count: s.solver.eig_count.unwrap_or(d.eig_count),
        eig_shift: s.solver.eig_shift.or(d.eig_shift),
        eig_tol: s.solver.eig_tol.unwrap_or(d.eig_tol),
    };
    o.validate()?;
    Ok(o)
}

/// Per-point input columns.
#[derive(Debug, Default)]
struct Fields {
    p: Vec<f64>,
    f: Vec<f64>,
    b: Option<Vec<f64>>,
    g: Option<Vec<f64>>,
    robin: Option<Vec<f64>>,
    exact: Option<Vec<f64>>,
}

fn load_fields(path: &Path, n: usize) -> Result<Fields, CliError> {
    let parse_err = |line: usize, message: String| CliError::Core(PimError::Parse { line, message });
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Usage(format!("{}: {e}", path.display())),
            _ => parse_err(0, e.to_string()),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci), Some(cp), Some(cf)) = (col("index"), col("p"), col("f")) else {
        return Err(parse_err(
            1,
            format!("{}: header must contain index,p,f", path.display()),
        ));
    };
    let optional = ["b", "g", "robin", "u_exact"].map(|c| col(c));
    let mut cols: Vec<Vec<Option<f64>>> = vec![vec![None; n]; 6];
    let mut seen = vec![false; n];
    for (row, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(row + 2, |p| p.line() as usize);
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        let get = |c: usize| -> Result<Option<f64>, CliError> {
            match record.get(c).unwrap_or("") {
                "" => Ok(None),
                v => v
                    .parse()
                    .map(Some)
                    .map_err(|_| parse_err(line, format!("bad number `{v}`"))),
            }
        };
        let index: usize = record
            .get(ci)
            .unwrap_or("")
            .parse()
            .map_err(|_| parse_err(line, "bad index".into()))?;
        if index >= n || seen[index] {
            return Err(parse_err(line, format!("index {index} out of range or repeated")));
        }
        seen[index] = true;
        for (k, c) in [Some(cp), Some(cf)].into_iter().chain(optional).enumerate() {
            if let Some(c) = c {
                cols[k][index] = get(c)?;
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_err(0, format!("{}: no row for point {i}", path.display())));
    }
    let required = |k: usize, name: &str| -> Result<Vec<f64>, CliError> {
        cols[k]
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| parse_err(0, format!("missing `{name}` for point {i}"))))
            .collect()
    };
    let any = |k: usize| cols[k].iter().any(Option::is_some);
    Ok(Fields {
        p: required(0, "p")?,
        f: required(1, "f")?,
        b: any(2).then(|| cols[2].iter().map(|v| v.unwrap_or(f64::NAN)).collect()),
        g: any(3).then(|| cols[3].iter().map(|v| v.unwrap_or(f64::NAN)).collect()),
        robin: any(4).then(|| cols[4].iter().map(|v| v.unwrap_or(f64::NAN)).collect()),
        exact: any(5).then(|| cols[5].iter().map(|v| v.unwrap_or(f64::NAN)).collect()),
    })
}

/// Cloud, problem data and (when known) the exact solution.
struct Loaded {
    cloud: PointCloud,
    p: Vec<f64>,
    f: Vec<f64>,
    /// Boundary data per boundary slot for the requested condition.
    data: Option<Vec<f64>>,
    exact: Option<Vec<f64>>,
    label: String,
}

fn builtin_case(s: &Settings, seed: u64) -> Result<TestCase, CliError> {
    let geometry: Geometry = s.geometry.as_deref().unwrap_or("disk").parse()?;
    let n = s.n.unwrap_or(684);
    if s.random.unwrap_or(false) {
        if geometry != Geometry::Disk {
            return Err(CliError::Usage("--random is only available for the disk".into()));
        }
        return Ok(TestCase::with_cloud(geometry, sample_disk_random(n, seed)?)?);
    }
    Ok(TestCase::new(geometry, n)?)
}

fn load_problem(config: &RunConfig, kind: Option<BoundaryKind>) -> Result<Loaded, CliError> {
    let s = &config.settings;
    if let Some(path) = &s.cloud {
        let cloud = load_cloud(path)?;
        let n = cloud.len();
        let fields = match &s.fields {
            Some(fp) => load_fields(fp, n)?,
            None => Fields {
                p: vec![1.0; n],
                f: vec![0.0; n],
                ..Fields::default()
            },
        };
        let on_boundary = |v: &Vec<f64>| -> Vec<f64> { cloud.boundary_ids().iter().map(|&i| v[i]).collect() };
        let data = match kind {
            None => None,
            Some(BoundaryKind::Neumann) => Some(fields.b.as_ref().map_or(vec![0.0; cloud.num_boundary()], on_boundary)),
            Some(BoundaryKind::Dirichlet) => Some(
                fields
                    .g
                    .as_ref()
                    .map(on_boundary)
                    .ok_or_else(|| CliError::Usage("dirichlet data needs a `g` column".into()))?,
            ),
            Some(BoundaryKind::Robin(beta)) => Some(match (&fields.robin, &fields.g, &fields.b) {
                (Some(r), _, _) => on_boundary(r),
                (None, Some(g), Some(b)) => on_boundary(&g.iter().zip(b).map(|(g, b)| g + beta * b).collect()),
                (None, Some(g), None) => on_boundary(g),
                _ => return Err(CliError::Usage("robin data needs a `robin` or `g` column".into())),
            }),
        };
        if let Some(d) = &data {
            if let Some(slot) = d.iter().position(|v| !v.is_finite()) {
                return Err(CliError::Usage(format!(
                    "boundary point {} has no boundary data",
                    cloud.boundary_ids()[slot]
                )));
            }
        }
        let label = path.display().to_string();
        return Ok(Loaded {
            p: fields.p,
            f: fields.f,
            data,
            exact: fields.exact,
            label,
            cloud,
        });
    }
    if s.geometry.as_deref() == Some("circle") {
        let cloud = sample_circle(s.n.unwrap_or(2000))?;
        let n = cloud.len();
        return Ok(Loaded {
            label: format!("circle-{n}"),
            p: vec![1.0; n],
            f: vec![0.0; n],
            data: kind.map(|_| Vec::new()),
            exact: None,
            cloud,
        });
    }
    let case = builtin_case(s, config.seed)?;
    let problem = kind.map(|k| case.problem(k));
    Ok(Loaded {
        label: case.name.clone(),
        p: case.coefficient_values(),
        f: case.forcing_values(),
        data: problem.map(|p| p.boundary.data().to_vec()),
        exact: Some(case.exact_values()),
        cloud: case.cloud,
    })
}

fn cmd_sample(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.settings;
    let header = config.header();
    if s.geometry.as_deref() == Some("circle") {
        let cloud = sample_circle(s.n.unwrap_or(2000))?;
        save_cloud(&cloud, out_path(config, "cloud.csv")?, &header)?;
        println!("wrote circle cloud with {} points", cloud.len());
        return Ok(());
    }
    let case = builtin_case(s, config.seed)?;
    let cloud = &case.cloud;
    save_cloud(cloud, out_path(config, "cloud.csv")?, &header)?;
    let (p, f, u) = (case.coefficient_values(), case.forcing_values(), case.exact_values());
    let (b, g) = (case.flux_values(), case.dirichlet_values());
    let mut body = String::from("index,p,f,b,g,u_exact\n");
    for i in 0..cloud.len() {
        let (bi, gi) = match cloud.boundary_slot(i) {
            Some(l) => (num(b[l]), num(g[l])),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(body, "{i},{},{},{bi},{gi},{}", num(p[i]), num(f[i]), num(u[i]));
    }
    write_output(config, "fields.csv", &body)?;
    println!(
        "wrote {} cloud with {} points ({} on the boundary)",
        case.geometry,
        cloud.len(),
        cloud.num_boundary()
    );
    Ok(())
}

fn cmd_solve(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.settings;
    let kind = boundary_kind(s)?;
    let loaded = load_problem(config, Some(kind))?;
    let cloud = &loaded.cloud;
    let kernel = kernel_for(cloud, s)?;
    let options = solve_options(s)?;
    let data = loaded.data.clone().unwrap_or_default();
    let problem = match kind {
        BoundaryKind::Neumann => ProblemSpec::neumann(loaded.p.clone(), loaded.f.clone(), data),
        BoundaryKind::Dirichlet => ProblemSpec::dirichlet(loaded.p.clone(), loaded.f.clone(), data),
        BoundaryKind::Robin(beta) => ProblemSpec::robin(loaded.p.clone(), loaded.f.clone(), data, beta),
    };
    let asm = Assembler::new(cloud, kernel.clone())?;
    let allow = s.allow_unconverged.unwrap_or(false);
    let (solution, converged) = solve_problem(&asm, &problem, &options, true)?;

    let mut body = String::from("index,u\n");
    for (i, u) in solution.u.iter().enumerate() {
        let _ = writeln!(body, "{i},{}", num(*u));
    }
    write_output(config, "solution.csv", &body)?;

    let mut report = String::new();
    let mut field = |k: &str, v: String| {
        let _ = writeln!(report, "{k}: {v}");
    };
    field("problem", loaded.label.clone());
    field("points", cloud.len().to_string());
    field("boundary_points", cloud.num_boundary().to_string());
    field("boundary", kind.name().into());
    field("kernel", kernel.family.to_string());
    field(
        "bandwidth",
        match &kernel.bandwidth {
            Bandwidth::Global(t) => num(*t),
            Bandwidth::PerPoint(ts) => {
                format!("adaptive (max {})", num(kernel.bandwidth.max().max(ts[0])))
            }
        },
    );
    field("truncation", num(kernel.truncation));
    field("iterations", solution.iterations.to_string());
    field("final_residual", num(solution.diagnostics.final_residual));
    field("compatibility_defect", num(solution.diagnostics.compatibility_defect));
    field("nullspace_removed", num(solution.diagnostics.nullspace_removed));
    if !solution.boundary_residual_history.is_empty() {
        field(
            "alm_outer_iterations",
            solution.boundary_residual_history.len().to_string(),
        );
        field(
            "alm_boundary_residual",
            num(*solution.boundary_residual_history.last().unwrap_or(&f64::NAN)),
        );
        field("alm_converged", converged.to_string());
    }
    let mut errors = None;
    if let Some(exact) = &loaded.exact {
        let (abs, rel) = match kind {
            BoundaryKind::Neumann => gauge_fixed_l2_error(cloud, &solution.u, exact, &symmetrizer(cloud, &loaded.p))?,
            _ => weighted_l2_error(cloud, &solution.u, exact)?,
        };
        let measure: f64 = cloud.volume().iter().sum();
        field("abs_l2", num(abs));
        field("rel_l2", num(rel));
        field("rms_l2", num(abs / measure.sqrt()));
        errors = Some((abs, rel));
    }
    write_output(config, "diagnostics.txt", &report)?;
    match errors {
        Some((abs, rel)) => println!("{}: abs_l2={abs:.6e} rel_l2={rel:.6e}", loaded.label),
        None => println!("{}: solved in {} iterations", loaded.label, solution.iterations),
    }
    if !converged && !allow {
        return Err(CliError::Core(PimError::AlmNotConverged {
            history: solution.boundary_residual_history,
        }));
    }
    Ok(())
}

fn cmd_eig(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.settings;
    let beta = match boundary_kind(s)? {
        BoundaryKind::Neumann => None,
        BoundaryKind::Robin(beta) => Some(beta),
        BoundaryKind::Dirichlet => {
            return Err(CliError::Usage("eig supports neumann or robin boundaries".into()));
        }
    };
    let loaded = load_problem(config, None)?;
    let cloud = &loaded.cloud;
    let kernel = kernel_for(cloud, s)?;
    let options = solve_options(s)?;
    let asm = Assembler::new(cloud, kernel)?;
    let bundle = asm.eigen_bundle(&loaded.p, beta)?;
    let pairs = solve_eigs(&bundle, &options)?;
    let mut body = String::from("rank,lambda,residual\n");
    for (k, pair) in pairs.iter().enumerate() {
        let _ = writeln!(body, "{},{},{}", k + 1, num(pair.value), num(pair.residual));
    }
    write_output(config, "eigenvalues.csv", &body)?;
    for (k, pair) in pairs.iter().take(s.vectors.unwrap_or(0)).enumerate() {
        let coords: Vec<String> = (0..cloud.dim()).map(|c| format!("x{c}")).collect();
        let mut body = format!("# lambda={}\nindex,{},v\n", num(pair.value), coords.join(","));
        for (i, v) in pair.vector.iter().enumerate() {
            let x: Vec<String> = cloud.point(i).iter().map(|&x| num(x)).collect();
            let _ = writeln!(body, "{i},{},{}", x.join(","), num(*v));
        }
        write_output(config, &format!("eigenvector_{}.csv", k + 1), &body)?;
    }
    println!("{}: {} eigenpairs", loaded.label, pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        println!("{:>3} {:.8e}", k + 1, pair.value);
    }
    Ok(())
}

fn cmd_converge(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.settings;
    let geometry: Geometry = s.geometry.as_deref().unwrap_or("disk").parse()?;
    let levels = s.levels.clone().unwrap_or_else(|| match geometry {
        Geometry::Cap => vec![1199, 4689, 18540],
        _ => vec![684, 2610, 10191],
    });
    if s.kernel.t.is_some() || s.kernel.adaptive.is_some() {
        return Err(CliError::Usage(
            "converge selects the bandwidth per level from knn; drop --t/--adaptive".into(),
        ));
    }
    let mut options = CaseOptions::new(boundary_kind(s)?);
    options.family = kernel_family(s)?;
    options.knn = s.kernel.knn.unwrap_or(DEFAULT_KNN);
    options.truncation = s.kernel.truncation.unwrap_or(DEFAULT_GAUSSIAN_TRUNCATION);
    options.solve = solve_options(s)?;
    options.allow_unconverged = s.allow_unconverged.unwrap_or(false);
    let comments = vec![format!("geometry={geometry} boundary={}", options.boundary.name())];
    let write = |report: &ConvergenceReport| -> Result<(), CliError> {
        write_output(config, "convergence.csv", &report.to_csv(&comments))?;
        for r in &report.rows {
            println!(
                "N={:>6} t={:.4e} abs_l2={:.6e} rel_l2={:.6e} rms_l2={:.6e}{}",
                r.n,
                r.t,
                r.abs_l2,
                r.rel_l2,
                r.rms_l2,
                if r.converged { "" } else { " (unconverged)" }
            );
        }
        println!("slope={:.4}", report.slope);
        Ok(())
    };
    match run_convergence(|n| TestCase::new(geometry, n), &levels, &options) {
        Ok(report) => write(&report),
        Err(failure) => {
            if !failure.partial.rows.is_empty() {
                write(&failure.partial)?;
            }
            Err(CliError::Core(failure.source))
        }
    }
}

fn cmd_inpaint(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.settings;
    let path = s
        .image
        .as_ref()
        .ok_or_else(|| CliError::Usage("inpaint needs --image".into()))?;
    let image = load_pgm(path)?;
    let n = image.len();
    let (mask, generated) = match &s.mask {
        Some(mp) => {
            let m = load_pgm(mp)?;
            if (m.width, m.height) != (image.width, image.height) {
                return Err(CliError::Usage("mask and image sizes differ".into()));
            }
            (mask_from_image(&m), false)
        }
        None => (random_mask(n, s.tv.subsample.unwrap_or(0.10), config.seed)?, true),
    };
    let patches = extract_patches(&image, s.tv.patch.unwrap_or(DEFAULT_PATCH_SIZE))?.with_mask(mask.clone())?;
    let d = TVOptions::default();
    let options = TVOptions {
        epsilon: s.tv.epsilon.unwrap_or(d.epsilon),
        max_outer: s.tv.max_outer.unwrap_or(d.max_outer),
        solve: SolveOptions {
            rel_tol: s.solver.rel_tol.unwrap_or(d.solve.rel_tol),
            ..d.solve.clone()
        },
        knn: s.tv.knn.unwrap_or(d.knn),
        constraint_beta: s.tv.constraint_beta,
        ..d
    };
    let result = tv_inpaint(&patches, &image.values, &options)?;
    let header = config.header();
    let restored = result.image.clone().with_maxval(image.maxval);
    restored.save(out_path(config, "restored.pgm")?, &header)?;
    if generated {
        let m = GrayImage::new(
            image.width,
            image.height,
            mask.iter().map(|&b| f64::from(u8::from(b))).collect(),
        )?;
        m.with_maxval(1).save(out_path(config, "mask.pgm")?, &header)?;
    }
    let mut report = String::new();
    let _ = writeln!(report, "pixels: {n}");
    let _ = writeln!(report, "known_pixels: {}", mask.iter().filter(|&&m| m).count());
    let _ = writeln!(report, "outer_iterations: {}", result.outer_iterations);
    let _ = writeln!(report, "converged: {}", result.converged);
    let _ = writeln!(report, "last_change: {}", num(*result.changes.last().unwrap_or(&0.0)));
    if let Some(tp) = &s.truth {
        let truth = load_pgm(tp)?;
        if truth.len() != n {
            return Err(CliError::Usage("truth and image sizes differ".into()));
        }
        let baseline = nearest_sample_fill(image.width, image.height, &mask, &image.values)?;
        let written = restored.quantize();
        let e = rmse(&written.values, &truth.values);
        let p = psnr(&written.values, &truth.values);
        let _ = writeln!(report, "rmse: {}", num(e));
        let _ = writeln!(
            report,
            "rmse_unquantized: {}",
            num(rmse(&result.image.values, &truth.values))
        );
        let _ = writeln!(
            report,
            "psnr_db: {}",
            if p.is_infinite() {
                "inf".to_string()
            } else {
                format!("{p:.4}")
            }
        );
        let _ = writeln!(report, "exact: {}", e == 0.0);
        let _ = writeln!(report, "baseline_rmse: {}", num(rmse(&baseline, &truth.values)));
        println!(
            "rmse={e:.6e} psnr={}",
            if p.is_infinite() {
                "inf (exact)".to_string()
            } else {
                format!("{p:.2} dB")
            }
        );
    }
    write_output(config, "report.txt", &report)?;
    println!(
        "restored {}x{} image in {} outer iterations",
        image.width, image.height, result.outer_iterations
    );
    Ok(())
}

fn cmd_verify_kernel(config: &RunConfig) -> Result<(), CliError> {
    let report = verify_assumptions(&kernel_family(&config.settings)?);
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "kernel {} violates the kernel assumptions",
            report.kernel
        )))
    }
}
