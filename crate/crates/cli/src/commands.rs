use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recipe_core::decoder::{decode_stream, peel_insert, PeelingState, ReceivedCodeword};
use recipe_core::distributions::{
    expand_invariant, ideal_soliton_sequence, pint_sequence, robust_soliton, shifted_soliton_sequence,
    PintParams,
};
use recipe_core::evaluation::{
    all_lengths, compare_t_vs_d, derive_seed, efficiency_curve, tune_pint, write_csv, CSV_HEADER,
};
use recipe_core::io::{
    apa_from_json, apa_to_json, read_codewords, write_codewords, xdd_sequence_from_json, xdd_sequence_to_json,
    CodewordRecord,
};
use recipe_core::protocol::{generate_avst, Avst, GlobalHash, PintConfig, Scheme, SwitchId};
use recipe_core::search::{hrs_search, qps_search, write_trace_csv, SearchConfig};
use recipe_core::{check_feasible, derive_apa, Apa64, Xdd64, XddSeq64};

use crate::output::{trace_path, write_atomic, Inputs, Sink};
use crate::{Cli, Command, CompareArgs, DistArgs, DistKind, EvaluateArgs, SchemeArgs, SchemeKind, SearchCommand};

/// Flag combinations clap cannot express; exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Input that parsed but failed a check; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ValidationFailure(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<ValidationFailure>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<recipe_core::Error>() {
            return if core.is_validation() || matches!(core, recipe_core::Error::Json(_)) {
                2
            } else {
                3
            };
        }
    }
    3
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut sink = Sink::new(cli.output.clone(), cli.seed);
    match cli.command {
        Command::Dist(args) => dist(args, sink),
        Command::Check { seq } => check(&seq, &mut sink),
        Command::DeriveApa { seq } => {
            let seq = load_seq(&seq, &mut sink.inputs)?;
            let apa = derive_apa(&seq)?;
            sink.emit(apa_to_json(&apa).as_bytes())
        }
        Command::GenAvst { apa, seq, rows } => {
            let apa = match (apa, seq) {
                (Some(p), _) => load_apa(&p, &mut sink.inputs)?,
                (None, Some(p)) => derive_apa(&load_seq(&p, &mut sink.inputs)?)?,
                (None, None) => return Err(usage("gen-avst needs --apa or --seq")),
            };
            if sink.out.is_none() {
                return Err(usage("gen-avst writes a binary table; give -o"));
            }
            let avst = generate_avst(&apa, rows, sink.seed)?;
            sink.emit(&avst.to_bytes())
        }
        Command::Simulate { scheme, k, packets } => simulate(&scheme, k, packets, sink),
        Command::Decode { scheme, codewords, k } => decode(&scheme, &codewords, k, sink),
        Command::Search(cmd) => search(cmd, sink),
        Command::Evaluate(args) => evaluate(args, sink),
        Command::Compare(args) => compare(args, sink),
    }
}

fn load_seq(path: &Path, inputs: &mut Inputs) -> Result<XddSeq64> {
    let text = inputs.read_string(path)?;
    xdd_sequence_from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn load_apa(path: &Path, inputs: &mut Inputs) -> Result<Apa64> {
    let text = inputs.read_string(path)?;
    apa_from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn require_k(diameter: Option<usize>, kind: &str) -> Result<usize> {
    diameter.ok_or_else(|| usage(format!("{kind} needs --K")))
}

fn pint_params(alpha: Option<f64>, p: Option<f64>) -> Result<PintParams<f64>> {
    match (alpha, p) {
        (Some(a), Some(p)) => Ok(PintParams::new(a, p)?),
        _ => Err(usage("PINT needs --alpha and --p")),
    }
}

fn dist(args: DistArgs, mut sink: Sink) -> Result<()> {
    let seq = match args.kind {
        DistKind::ShiftedSoliton => shifted_soliton_sequence(require_k(args.diameter, "shifted-soliton")?)?,
        DistKind::IdealSoliton => ideal_soliton_sequence(require_k(args.diameter, "ideal-soliton")?)?,
        DistKind::RobustSoliton => {
            let k = require_k(args.diameter, "robust-soliton")?;
            XddSeq64::new(
                (1..=k)
                    .map(|i| robust_soliton(i, args.c, args.delta))
                    .collect::<recipe_core::Result<Vec<_>>>()?,
            )?
        }
        DistKind::Pint => pint_sequence(
            require_k(args.diameter, "pint")?,
            &pint_params(args.alpha, args.p)?,
        )?,
        DistKind::Invariant => {
            let path = args.seq.as_ref().ok_or_else(|| usage("invariant needs --seq"))?;
            expand_invariant(load_seq(path, &mut sink.inputs)?.last())?
        }
    };
    let text = if args.pmf {
        let mut s = String::from("d,mass\n");
        for (d, m) in seq.last().masses().iter().enumerate() {
            writeln!(s, "{},{:.16e}", d + 1, m)?;
        }
        s
    } else {
        xdd_sequence_to_json(&seq)
    };
    sink.emit(text.as_bytes())
}

fn check(path: &Path, sink: &mut Sink) -> Result<()> {
    let seq = load_seq(path, &mut sink.inputs)?;
    let report = check_feasible(&seq);
    print!("{report}");
    if !report.feasible {
        return Err(ValidationFailure(format!("{} is not feasible", path.display())).into());
    }
    Ok(())
}

fn build_scheme(args: &SchemeArgs, inputs: &mut Inputs) -> Result<Scheme> {
    let apa = |inputs: &mut Inputs| -> Result<Option<Apa64>> {
        Ok(match (&args.apa, &args.seq) {
            (Some(p), _) => Some(load_apa(p, inputs)?),
            (None, Some(p)) => Some(derive_apa(&load_seq(p, inputs)?)?),
            (None, None) => None,
        })
    };
    Ok(match args.scheme {
        SchemeKind::RecipeD => {
            Scheme::recipe_d(apa(inputs)?.ok_or_else(|| usage("recipe-d needs --seq or --apa"))?)
        }
        SchemeKind::RecipeT => {
            let path = args.avst.as_ref().ok_or_else(|| usage("recipe-t needs --avst"))?;
            let avst = Avst::from_bytes(&inputs.read(path)?)
                .with_context(|| format!("loading {}", path.display()))?;
            if let Some(apa) = apa(inputs)? {
                avst.verify_apa(&apa)?;
            }
            Scheme::recipe_t(avst)
        }
        SchemeKind::Pint => {
            let params = pint_params(args.alpha, args.p)?;
            Scheme::Pint(if args.conditioned {
                PintConfig::conditioned(params)
            } else {
                PintConfig::new(params)
            })
        }
    })
}

fn check_length(k: usize, scheme: &Scheme) -> Result<()> {
    if k == 0 || k > scheme.diameter() {
        return Err(usage(format!("--k must lie in 1..={}", scheme.diameter())));
    }
    Ok(())
}

fn simulate(args: &SchemeArgs, k: usize, packets: usize, mut sink: Sink) -> Result<()> {
    let scheme = build_scheme(args, &mut sink.inputs)?;
    check_length(k, &scheme)?;
    let gh = GlobalHash::new(sink.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sink.seed, k as u64, 0));
    let mut ids: Vec<SwitchId> = Vec::with_capacity(k);
    while ids.len() < k {
        let id = SwitchId::new(rng.random_range(1..=u32::MAX as u64))?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    println!("# scheme={} k={k} seed={}", scheme.label(), sink.seed);
    let id_list: Vec<String> = ids.iter().map(|i| i.get().to_string()).collect();
    println!("# ids={}", id_list.join(";"));
    println!("packet,packet_id,actions,xor_set,codeword,resolved");
    let mut state = PeelingState::new(k)?;
    let mut records = Vec::new();
    let mut sent = 0;
    while !state.is_complete() && sent < packets {
        let pid: u64 = rng.random();
        let (pkt, trace) = scheme.encode_path_traced(&ids, pid, &gh)?;
        sent += 1;
        let cw = ReceivedCodeword::replay(pid, k, pkt.codeword, &scheme, &gh)?;
        if cw.xor_set.is_empty() && !scheme.counts_empty() {
            continue;
        }
        peel_insert(&mut state, &cw)?;
        records.push(CodewordRecord {
            packet_id: pid,
            codeword: pkt.codeword,
        });
        let actions: String = trace.iter().map(|a| a.letter()).collect();
        let set: Vec<String> = cw.xor_set.iter().map(|h| h.to_string()).collect();
        println!(
            "{},{pid},{actions},{},{},{}",
            records.len(),
            set.join(";"),
            pkt.codeword,
            state.resolved_count()
        );
    }
    let ok = state.ids().iter().zip(&ids).all(|(got, want)| got.is_none_or(|g| g == want.get()));
    if !ok {
        anyhow::bail!("decoded IDs disagree with the path");
    }
    println!(
        "# {} after {} codewords",
        if state.is_complete() { "complete" } else { "incomplete" },
        records.len()
    );
    if sink.out.is_some() {
        let mut buf = Vec::new();
        write_codewords(&records, &mut buf)?;
        sink.emit(&buf)?;
    }
    Ok(())
}

fn decode(args: &SchemeArgs, codewords: &Path, k: usize, mut sink: Sink) -> Result<()> {
    let scheme = build_scheme(args, &mut sink.inputs)?;
    check_length(k, &scheme)?;
    let gh = GlobalHash::new(sink.seed);
    let text = sink.inputs.read(codewords)?;
    let records = read_codewords(&text[..]).with_context(|| format!("loading {}", codewords.display()))?;
    let received = records
        .iter()
        .map(|r| ReceivedCodeword::replay(r.packet_id, k, r.codeword, &scheme, &gh))
        .collect::<recipe_core::Result<Vec<_>>>()?;
    let outcome = decode_stream(received, k)?;
    let doc = serde_json::json!({
        "k": k,
        "complete": outcome.complete,
        "used": outcome.used,
        "ids": outcome.ids,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    sink.emit(text.as_bytes())
}

fn search(cmd: SearchCommand, sink: Sink) -> Result<()> {
    let base = SearchConfig {
        seed: sink.seed,
        ..SearchConfig::default()
    };
    let (outcome, trace, header) = match cmd {
        SearchCommand::Hrs {
            diameter,
            candidates,
            trials,
            c,
            delta,
            trace,
        } => {
            let cfg = SearchConfig {
                candidates_per_hop: candidates,
                trials_per_candidate: trials,
                ..base
            };
            let mu_k: Xdd64 = robust_soliton(diameter, c, delta)?;
            (hrs_search(diameter, &cfg, Some(mu_k))?, trace, "length,candidate,mean_used")
        }
        SearchCommand::Qps {
            diameter,
            restarts,
            iterations,
            second_order,
            trace,
        } => {
            let cfg = SearchConfig {
                restarts,
                max_iterations: iterations,
                second_order,
                ..base
            };
            (qps_search(diameter, &cfg)?, trace, "restart,iteration,objective")
        }
    };
    eprintln!("objective {:.6}", outcome.objective);
    let trace_file: Option<PathBuf> = trace.or_else(|| sink.out.as_deref().map(trace_path));
    if let Some(path) = trace_file {
        let mut buf = Vec::new();
        write_trace_csv(&outcome.trace, header, &mut buf)?;
        write_atomic(&path, &buf)?;
    }
    sink.emit(xdd_sequence_to_json(&outcome.sequence).as_bytes())
}

fn lengths(explicit: &[usize], diameter: usize, scheme: &Scheme) -> Result<Vec<usize>> {
    let ks = if explicit.is_empty() {
        all_lengths(diameter)
    } else {
        explicit.to_vec()
    };
    for &k in &ks {
        check_length(k, scheme)?;
    }
    Ok(ks)
}

fn evaluate(args: EvaluateArgs, mut sink: Sink) -> Result<()> {
    let mut scheme = if args.tune && args.scheme.scheme == SchemeKind::Pint {
        None
    } else {
        Some(build_scheme(&args.scheme, &mut sink.inputs)?)
    };
    if args.tune && args.scheme.scheme != SchemeKind::Pint {
        return Err(usage("--tune applies to --scheme pint"));
    }
    let diameter = match (&scheme, args.diameter) {
        (_, Some(k)) => k,
        (Some(s), None) if !matches!(s, Scheme::Pint(_)) => s.diameter(),
        _ => return Err(usage("PINT evaluation needs --K")),
    };
    if scheme.is_none() {
        let tuned = tune_pint(diameter, diameter, args.tune_trials, sink.seed)?;
        eprintln!(
            "tuned PINT: alpha={} p={} mean={:.4}",
            tuned.params.alpha, tuned.params.p, tuned.mean
        );
        scheme = Some(Scheme::Pint(if args.scheme.conditioned {
            PintConfig::conditioned(tuned.params)
        } else {
            PintConfig::new(tuned.params)
        }));
    }
    let scheme = scheme.expect("built above");
    let ks = lengths(&args.ks, diameter, &scheme)?;
    if args.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut curve = efficiency_curve(&scheme, &ks, args.trials, sink.seed)?;
    curve.diameter = diameter;
    let mut buf = Vec::new();
    write_csv(&[curve], &mut buf)?;
    sink.emit(&buf)
}

fn compare(args: CompareArgs, mut sink: Sink) -> Result<()> {
    let mut out = format!("{CSV_HEADER}\n");
    for path in &args.curves {
        let text = sink.inputs.read_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(ValidationFailure(format!("{} is not a curve CSV", path.display())).into());
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            out.push_str(line);
            out.push('\n');
        }
    }
    if let Some(path) = &args.seq {
        let seq = load_seq(path, &mut sink.inputs)?;
        let diameter = args.diameter.unwrap_or(seq.diameter());
        if diameter == 0 || diameter > seq.diameter() {
            return Err(usage(format!("--K must lie in 1..={}", seq.diameter())));
        }
        if args.trials == 0 || args.rows.contains(&0) {
            return Err(usage("--trials and --rows must be positive"));
        }
        let mut curves = compare_t_vs_d(&seq, &all_lengths(diameter), &args.rows, args.trials, sink.seed)?;
        for c in &mut curves {
            c.diameter = diameter;
        }
        let mut buf = Vec::new();
        write_csv(&curves, &mut buf)?;
        let text = String::from_utf8(buf)?;
        for line in text.lines().skip(1) {
            out.push_str(line);
            out.push('\n');
        }
    } else if args.curves.is_empty() {
        return Err(usage("compare needs curve files or --seq"));
    }
    sink.emit(out.as_bytes())
}
