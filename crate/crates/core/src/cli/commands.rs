use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{
    resolve_seed, AblateCmd, ApplyCmd, CameraArgs, CliError, Command, IdentifyCmd, PoseCmd, SynthArgs, SynthCmd,
    TrainCmd, VerifyCmd, YawArgs, YawDistArg,
};
use crate::ablation::{ablation_variants, mean_pair_distance, run_experiment, ExperimentSpec};
use crate::block::{apply_batch, train_stitch, DreamParams, PairSet, TrainConfig, TrainingPair};
use crate::embedding::Embedding;
use crate::eval::{
    grid_csv, kfold_eer, rank_k_identification, roc_csv, score_pair, EvalReport, FoldProtocol, OpenSetPolicy,
    ScoredPair, VerificationReport, DEFAULT_YAW_BIN_EDGES_DEG,
};
use crate::io::{self, PoseRow};
use crate::pose::{estimate_pose, CameraIntrinsics, FaceModel3D, GateMode};
use crate::synth::{generate, make_pairs, PairCounts, PairRequest, SynthConfig};

type Out<'a> = &'a mut dyn Write;

fn emit(out: Out, lines: &[String]) -> Result<(), CliError> {
    for l in lines {
        writeln!(out, "{l}").map_err(|e| CliError::data(format!("stdout: {e}")))?;
    }
    Ok(())
}

pub(super) fn dispatch(cmd: Command, env_seed: Option<&str>, out: Out) -> Result<(), CliError> {
    match cmd {
        Command::Synth(c) => synth(c, env_seed, out),
        Command::Pose(c) => pose(c, out),
        Command::Train(c) => train(c, env_seed, out),
        Command::Apply(c) => apply(c, out),
        Command::EvalVerify(c) => verify(c, out),
        Command::EvalIdentify(c) => identify(c, out),
        Command::Ablate(c) => ablate(c, env_seed, out),
    }
}

fn synth_config(a: &SynthArgs, default_yaw: YawDistArg, seed: u64) -> SynthConfig {
    SynthConfig {
        num_subjects: a.subjects,
        images_per_subject: a.images,
        embedding_dim: a.dim,
        yaw_distribution: a.yaw_dist.unwrap_or(default_yaw).into(),
        perturbation: a.perturbation.into(),
        perturbation_scale: a.scale,
        embedding_noise: a.noise,
        landmark_noise_px: a.landmark_noise,
        image_width: a.image_width,
        image_height: a.image_height,
        seed,
        ..SynthConfig::default()
    }
}

fn pair_request(a: &SynthArgs) -> PairRequest {
    PairRequest {
        train_fraction: a.train_fraction,
        folds: a.folds,
        counts: PairCounts::PerSubject {
            same: a.same,
            not_same: a.not_same,
        },
        seed: None,
    }
}

fn synth(c: SynthCmd, env_seed: Option<&str>, out: Out) -> Result<(), CliError> {
    let seed = resolve_seed(c.seed.seed, env_seed)?;
    let cfg = synth_config(&c.synth, YawDistArg::Uniform, seed);
    cfg.validate()?;
    let ds = generate(&cfg)?;
    let split = make_pairs(&ds, &pair_request(&c.synth))?;
    std::fs::create_dir_all(&c.out).map_err(|e| CliError::data(format!("{}: {e}", c.out.display())))?;
    let dir = &c.out;

    io::save_embeddings(&dir.join("embeddings.bin"), &ds.embeddings())?;
    let eval_images: Vec<Embedding> = split
        .eval_subjects
        .iter()
        .flat_map(|&s| ds.images.iter().filter(move |im| im.subject == s))
        .map(|im| ds.image_embedding(im))
        .collect();
    let gallery: Vec<Embedding> = split.eval_subjects.iter().map(|&s| ds.frontal_embedding(s)).collect();
    io::save_embeddings(&dir.join("probes.bin"), &eval_images)?;
    io::save_embeddings(&dir.join("gallery.bin"), &gallery)?;

    let landmarks: Vec<_> = ds.images.iter().map(|im| im.landmarks.clone()).collect();
    io::write_file(&dir.join("landmarks.csv"), |w| io::write_landmarks(w, &landmarks))?;
    let poses: Vec<PoseRow> = ds.images.iter().map(|im| (im.id.clone(), Some(im.pose))).collect();
    io::write_file(&dir.join("poses.csv"), |w| io::write_poses(w, &poses))?;

    let train_pairs: Vec<_> = split
        .train
        .iter()
        .map(|t| crate::eval::LabeledPair {
            id1: t.frontal.id.clone(),
            id2: t.profile.id.clone(),
            same: true,
        })
        .collect();
    io::write_file(&dir.join("train_pairs.csv"), |w| io::write_pairs(w, &train_pairs))?;
    io::write_file(&dir.join("protocol.csv"), |w| io::write_protocol(w, &split.protocol))?;

    let mut manifest = cfg.manifest();
    let _ = writeln!(manifest, "train_fraction={}", c.synth.train_fraction);
    let _ = writeln!(manifest, "folds={}", c.synth.folds);
    let _ = writeln!(manifest, "train_subjects={}", split.train_subjects.len());
    let _ = writeln!(manifest, "eval_subjects={}", split.eval_subjects.len());
    let _ = writeln!(manifest, "train_pairs={}", split.train.len());
    let _ = writeln!(manifest, "eval_pairs={}", split.eval_pairs().len());
    std::fs::write(dir.join("manifest"), &manifest).map_err(|e| CliError::data(format!("manifest: {e}")))?;

    emit(
        out,
        &[
            format!("subjects={}", ds.subjects.len()),
            format!("images={}", ds.images.len()),
            format!("train_pairs={}", split.train.len()),
            format!("eval_pairs={}", split.eval_pairs().len()),
            format!("seed={seed}"),
            format!("out={}", dir.display()),
        ],
    )
}

fn camera_setup(c: &CameraArgs) -> Result<(FaceModel3D, CameraIntrinsics), CliError> {
    let model = match &c.face_model {
        Some(p) => io::read_file(p, io::read_face_model)?,
        None => FaceModel3D::builtin(),
    };
    Ok((model, CameraIntrinsics::for_image(c.image_width, c.image_height)?))
}

/// Pose rows for every landmark set plus the first failure, if any.
fn estimate_all(landmarks: &Path, camera: &CameraArgs) -> Result<(Vec<PoseRow>, Option<CliError>), CliError> {
    let (model, cam) = camera_setup(camera)?;
    let sets = io::read_file(landmarks, io::read_landmarks)?;
    let mut first_err = None;
    let rows = sets
        .iter()
        .map(|s| match estimate_pose(&model, s, &cam) {
            Ok(p) => (s.image_id.clone(), Some(p)),
            Err(e) => {
                first_err.get_or_insert_with(|| CliError::from(e).prefixed(&s.image_id));
                (s.image_id.clone(), None)
            }
        })
        .collect();
    Ok((rows, first_err))
}

impl CliError {
    fn prefixed(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

fn pose(c: PoseCmd, out: Out) -> Result<(), CliError> {
    let (rows, first_err) = estimate_all(&c.landmarks, &c.camera)?;
    let failed = rows.iter().filter(|(_, p)| p.is_none()).count();
    if !rows.is_empty() && failed == rows.len() {
        return Err(first_err.expect("every row failed"));
    }
    io::write_file(&c.out, |w| io::write_poses(w, &rows))?;
    emit(
        out,
        &[
            format!("images={}", rows.len()),
            format!("failed={failed}"),
            format!("out={}", c.out.display()),
        ],
    )
}

fn load_embeddings(path: &Path, dim: Option<usize>) -> Result<Vec<Embedding>, CliError> {
    let es = io::load_embeddings(path)?;
    if let Some(d) = dim {
        if let Some(e) = es.iter().find(|e| e.dim() != d) {
            return Err(CliError::data(format!(
                "{}: embedding `{}` has dimension {}, expected {d}",
                path.display(),
                e.id,
                e.dim()
            )));
        }
    }
    Ok(es)
}

/// Overrides embedded yaws from `--landmarks`, then from `--poses`.
fn resolve_yaws(es: &mut [Embedding], y: &YawArgs) -> Result<(), CliError> {
    let mut table: BTreeMap<String, f64> = BTreeMap::new();
    if let Some(lm) = &y.landmarks {
        let (rows, _) = estimate_all(lm, &y.camera)?;
        table.extend(rows.into_iter().filter_map(|(id, p)| p.map(|p| (id, p.yaw))));
    }
    if let Some(p) = &y.poses {
        table.extend(io::read_file(p, io::read_pose_yaws)?);
    }
    if table.is_empty() {
        return Ok(());
    }
    for e in es.iter_mut() {
        if let Some(&yaw) = table.get(&e.id).or_else(|| table.get(&io::record_id(e))) {
            e.yaw = Some(yaw);
        }
    }
    Ok(())
}

fn require_yaws(es: &[Embedding]) -> Result<Vec<f64>, CliError> {
    es.iter()
        .map(|e| e.yaw.ok_or_else(|| CliError::data(format!("no yaw for embedding `{}`", io::record_id(e)))))
        .collect()
}

fn load_block(path: &Path, dim: usize) -> Result<DreamParams, CliError> {
    let p = io::load_checkpoint(path)?;
    if p.dim != dim {
        return Err(CliError::data(format!(
            "{}: block dimension {} does not match embeddings of dimension {dim}",
            path.display(),
            p.dim
        )));
    }
    Ok(p)
}

fn correct(es: Vec<Embedding>, params: &DreamParams, gate: GateMode) -> Result<Vec<Embedding>, CliError> {
    let yaws = require_yaws(&es)?;
    let inputs: Vec<(Embedding, f64)> = es.into_iter().zip(yaws).collect();
    Ok(apply_batch(params, &inputs, gate)?)
}

/// Looks embeddings up by bare id or by `subject/image`.
struct Lookup<'a> {
    by_key: HashMap<String, Option<&'a Embedding>>,
}

impl<'a> Lookup<'a> {
    fn new(es: &'a [Embedding]) -> Self {
        let mut by_key: HashMap<String, Option<&'a Embedding>> = HashMap::new();
        for e in es {
            let full = io::record_id(e);
            if full != e.id {
                by_key.insert(full, Some(e));
            }
            // a bare id shared by two records is ambiguous
            by_key
                .entry(e.id.clone())
                .and_modify(|slot| *slot = None)
                .or_insert(Some(e));
        }
        Self { by_key }
    }

    fn get(&self, id: &str) -> Result<&'a Embedding, CliError> {
        match self.by_key.get(id) {
            Some(Some(e)) => Ok(e),
            Some(None) => Err(CliError::data(format!("id `{id}` matches several embeddings"))),
            None => Err(CliError::data(format!("pair references unknown embedding `{id}`"))),
        }
    }
}

fn train(c: TrainCmd, env_seed: Option<&str>, out: Out) -> Result<(), CliError> {
    let seed = resolve_seed(c.seed.seed, env_seed)?;
    let mut es = load_embeddings(&c.embeddings, c.dim)?;
    resolve_yaws(&mut es, &c.yaw)?;
    let protocol = io::read_file(&c.pairs, io::read_pairs)?;
    let lookup = Lookup::new(&es);
    let mut pairs = Vec::new();
    let mut ignored = 0usize;
    for lp in protocol.folds.iter().flatten() {
        if !lp.same {
            ignored += 1;
            continue;
        }
        let (a, b) = (lookup.get(&lp.id1)?, lookup.get(&lp.id2)?);
        let ya = a.yaw.ok_or_else(|| CliError::data(format!("no yaw for embedding `{}`", lp.id1)))?;
        let yb = b.yaw.ok_or_else(|| CliError::data(format!("no yaw for embedding `{}`", lp.id2)))?;
        let (frontal, profile, yaw) = if yb.abs() < ya.abs() { (b, a, ya) } else { (a, b, yb) };
        pairs.push(TrainingPair {
            profile: profile.clone(),
            frontal: frontal.clone(),
            profile_yaw: yaw,
        });
    }
    if pairs.is_empty() {
        return Err(CliError::data(format!("{}: no same-subject pairs to train on", c.pairs.display())));
    }
    let set = PairSet::new(pairs)?;
    let t = &c.train;
    let cfg = TrainConfig {
        learning_rate: t.lr,
        momentum: t.momentum,
        weight_decay: t.weight_decay,
        batch_size: t.batch,
        epochs: t.epochs,
        dropout_rate: t.dropout,
        seed,
        gate_mode: t.gate.into(),
        arch: t.arch.into(),
        hidden: t.hidden,
    };
    let outcome = train_stitch(&set, &cfg)?;
    io::save_checkpoint(&c.checkpoint, &outcome.params)?;
    if let Some(p) = &c.out {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in outcome.loss_history.iter().enumerate() {
            let _ = writeln!(s, "{i},{l}");
        }
        std::fs::write(p, s).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    let before = mean_pair_distance(None, set.pairs(), cfg.gate_mode)?;
    let after = mean_pair_distance(Some(&outcome.params), set.pairs(), cfg.gate_mode)?;
    emit(
        out,
        &[
            format!("pairs={}", set.len()),
            format!("pairs_ignored={ignored}"),
            format!("params={}", outcome.params.num_params()),
            format!("initial_loss={}", outcome.initial_loss),
            format!("final_loss={}", outcome.final_loss),
            format!("mean_distance_before={before}"),
            format!("mean_distance_after={after}"),
            format!("seed={seed}"),
            format!("checkpoint={}", c.checkpoint.display()),
        ],
    )
}

fn apply(c: ApplyCmd, out: Out) -> Result<(), CliError> {
    let mut es = load_embeddings(&c.embeddings, c.dim)?;
    resolve_yaws(&mut es, &c.yaw)?;
    let dim = es.first().map_or(0, Embedding::dim);
    let params = load_block(&c.checkpoint, dim)?;
    let n = es.len();
    let corrected = correct(es, &params, c.gate.into())?;
    io::save_embeddings(&c.out, &corrected)?;
    emit(out, &[format!("embeddings={n}"), format!("out={}", c.out.display())])
}

fn yaw_edges(bins: &Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let deg: Vec<f64> = match bins.as_deref() {
        None => DEFAULT_YAW_BIN_EDGES_DEG.to_vec(),
        Some([n]) if n.fract() == 0.0 && *n >= 1.0 => {
            let n = *n as usize;
            (0..=n).map(|i| 90.0 * i as f64 / n as f64).collect()
        }
        Some(edges) => edges.to_vec(),
    };
    if deg.len() < 2 {
        return Err(CliError::Usage("--yaw-bins needs a bin count or at least two edges".into()));
    }
    Ok(deg.iter().map(|d| d.to_radians()).collect())
}

fn prepare(
    path: &Path,
    dim: Option<usize>,
    yaw: &YawArgs,
    checkpoint: Option<&Path>,
    gate: GateMode,
) -> Result<Vec<Embedding>, CliError> {
    let mut es = load_embeddings(path, dim)?;
    resolve_yaws(&mut es, yaw)?;
    match checkpoint {
        Some(cp) => {
            let params = load_block(cp, es.first().map_or(0, Embedding::dim))?;
            correct(es, &params, gate)
        }
        None => Ok(es),
    }
}

fn verify(c: VerifyCmd, out: Out) -> Result<(), CliError> {
    let edges = yaw_edges(&c.yaw_bins)?;
    if let Some(f) = c.far.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(CliError::Usage(format!("FAR target {f} outside (0, 1]")));
    }
    let es = prepare(&c.embeddings, c.dim, &c.yaw, c.checkpoint.as_deref(), c.gate.into())?;
    let protocol: FoldProtocol = io::read_file(&c.pairs, io::read_pairs)?;
    let lookup = Lookup::new(&es);
    let folds: Vec<Vec<ScoredPair>> = protocol
        .folds
        .iter()
        .map(|fold| {
            fold.iter()
                .map(|lp| Ok(score_pair(lookup.get(&lp.id1)?, lookup.get(&lp.id2)?, lp.same)?))
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, _>>()?;
    let pooled: Vec<ScoredPair> = folds.iter().flatten().cloned().collect();
    let report = EvalReport {
        verification: Some(VerificationReport::compute(&pooled, &c.far, c.interpolate, &edges)?),
        kfold: if folds.len() > 1 { Some(kfold_eer(&folds)?) } else { None },
        rank: None,
    };
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        let v = report.verification.as_ref().expect("verification computed");
        let mut files = vec![("report.txt", report.render()), ("roc.csv", roc_csv(&v.roc))];
        if let Some(h) = &v.heatmap {
            files.push(("heatmap_fpr.csv", grid_csv(&h.edges, &h.fpr_grid())));
            files.push(("heatmap_fnr.csv", grid_csv(&h.edges, &h.fnr_grid())));
        }
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        }
    }
    let mut lines = vec![format!("pairs={}", pooled.len())];
    lines.extend(report.metric_lines());
    emit(out, &lines)
}

fn identify(c: IdentifyCmd, out: Out) -> Result<(), CliError> {
    if c.ranks.contains(&0) {
        return Err(CliError::Usage("ranks start at 1".into()));
    }
    let gate = c.gate.into();
    let probes = prepare(&c.embeddings, c.dim, &c.yaw, c.checkpoint.as_deref(), gate)?;
    let gallery = prepare(&c.gallery, c.dim, &c.yaw, c.checkpoint.as_deref(), gate)?;
    let policy = if c.exclude_unknown {
        OpenSetPolicy::Exclude
    } else {
        OpenSetPolicy::Reject
    };
    let report = EvalReport {
        rank: Some(rank_k_identification(&probes, &gallery, &c.ranks, policy)?),
        ..EvalReport::default()
    };
    if let Some(p) = &c.out {
        std::fs::write(p, report.render()).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    let r = report.rank.as_ref().expect("rank computed");
    let mut lines = vec![format!("probes={}", r.probes_used), format!("gallery={}", gallery.len())];
    lines.extend(report.metric_lines());
    emit(out, &lines)
}

fn ablate(c: AblateCmd, env_seed: Option<&str>, out: Out) -> Result<(), CliError> {
    let seed = resolve_seed(c.seed.seed, env_seed)?;
    let data = synth_config(&c.synth, YawDistArg::FrontalHeavy, seed);
    data.validate()?;
    let t = &c.train;
    let spec = ExperimentSpec {
        data,
        pairs: pair_request(&c.synth),
        train: TrainConfig {
            learning_rate: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch,
            epochs: t.epochs,
            dropout_rate: t.dropout,
            seed,
            hidden: t.hidden,
            ..TrainConfig::default()
        },
        variants: ablation_variants(),
        apply_yaw_noise: c.yaw_noise.map(|r| (r, seed)),
    };
    let res = run_experiment(&spec)?;

    let mut table = String::from("gate,arch,eer,eer_mean,eer_std,eer_yaw_noise,distance_before,distance_after\n");
    let _ = writeln!(table, "naive,none,{},{},,,,", res.naive_eer, res.naive_eer_mean);
    let mut lines = vec![
        format!("naive_eer={:.4}", res.naive_eer),
        format!("naive_eer_mean={:.4}", res.naive_eer_mean),
    ];
    for r in &res.runs {
        let noisy = r.eer_yaw_noise.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{}",
            r.gate, r.arch, r.eer, r.eer_mean, r.eer_std, noisy, r.train_distance_before, r.train_distance_after
        );
        let mut l = format!(
            "variant={}/{} eer={:.4} eer_mean={:.4} eer_std={:.4}",
            r.gate, r.arch, r.eer, r.eer_mean, r.eer_std
        );
        if let Some(v) = r.eer_yaw_noise {
            let _ = write!(l, " eer_yaw_noise={v:.4}");
        }
        let _ = write!(
            l,
            " distance_reduction={:.4}",
            1.0 - r.train_distance_after / r.train_distance_before
        );
        lines.push(l);
    }
    if let Some(p) = &c.out {
        std::fs::write(p, table).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    lines.push(format!("seed={seed}"));
    emit(out, &lines)
}
