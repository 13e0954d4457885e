use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use securecyclon::{AttackPlan, Mode, Strategy as Attack};
use securecyclon_cli::report::Target;
use securecyclon_cli::runner::{self, MANIFEST};
use securecyclon_cli::{cmd_report, CliError, ScenarioFile, SeedRange, Source};

const SMALL: &str = r#"
name = "small"

[scenario]
cycles = 25

[scenario.params]
n = 60
view_len = 8
swap_len = 3

[scenario.attack]
strategy = { kind = "hub-attack" }
start_cycle = 10
malicious_count = 3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_securecyclon"))
}

fn csvs(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn attack() -> impl Strategy<Value = Attack> {
    prop_oneof![
        Just(Attack::HubAttack),
        Just(Attack::LinkDepletion),
        (0u32..30).prop_map(|age| Attack::CloneAtAge { age }),
        (1u32..5).prop_map(|rate| Attack::FrequencySpam { rate }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_files_round_trip(
        view_len in 2usize..40,
        swap_frac in 0.0f64..1.0,
        legacy in any::<bool>(),
        titfortat in any::<bool>(),
        cycles in 0u64..1000,
        seed in any::<u32>(),
        loss in 0.0f64..0.5,
        attack in proptest::option::of((attack(), 0u64..100, 0.0f64..0.5, proptest::option::of(0u32..50))),
        sweep_s in proptest::collection::vec(1usize..3, 0..3),
        seeds in proptest::option::of((1u64..50, 0u64..10)),
        hops in proptest::option::of(0u32..5),
    ) {
        let mut file = ScenarioFile {
            name: "prop".into(),
            ..ScenarioFile::default()
        };
        let c = &mut file.scenario;
        c.params.view_len = view_len;
        c.params.swap_len = 1 + ((view_len - 1) as f64 * swap_frac) as usize;
        c.mode = if legacy { Mode::Legacy } else { Mode::Secure };
        c.titfortat = titfortat;
        c.cycles = cycles;
        c.seed = seed as u64;
        c.message_loss = loss;
        c.flood_hops = hops;
        c.attack = attack.map(|(strategy, start_cycle, malicious_fraction, claimed_age)| AttackPlan {
            strategy,
            start_cycle,
            malicious_fraction,
            claimed_age,
            ..AttackPlan::default()
        });
        file.sweep.swap_len = sweep_s;
        file.sweep.seeds = seeds.map(|(a, d)| SeedRange { first: a, last: a + d });
        file.targets.push(Target {
            name: "t".into(),
            group: "prop".into(),
            metric: "eclipsed".into(),
            ratio_of: None,
            from: 1,
            to: 2,
            min: Some(0.25),
            max: None,
        });
        let text = file.to_toml();
        let back: ScenarioFile = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, file);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    for bad in [
        "colour = 1",
        "[scenario]\nspeed = 2",
        "[scenario.params]\nfanout = 3",
        "[scenario.attack]\nstrategy = { kind = \"hub-attack\" }\nbudget = 1",
        "[scenario.tuning]\nfoo = 1",
        "[sweep]\nview = [1]",
        "[[target]]\nname = \"a\"\ngroup = \"b\"\nmetric = \"c\"\nfrom = 0\nto = 1\nwant = 3",
    ] {
        assert!(matches!(ScenarioFile::parse(bad), Err(CliError::Config(_))), "accepted: {bad}");
    }
    assert!(ScenarioFile::parse(SMALL).is_ok());
}

#[test]
fn invalid_values_are_config_errors() {
    let err = ScenarioFile::parse("[scenario.params]\nview_len = 4\nswap_len = 9").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn seed_sweep_writes_distinct_csvs_and_a_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let source = Source::Scenario(ScenarioFile::parse(SMALL).unwrap());
    let points = source.points(Some("1..4".parse().unwrap())).unwrap();
    let manifest = runner::execute("small", &[], &points, 2, dir.path()).unwrap();
    assert_eq!(manifest.runs.len(), 4);
    let first = csvs(dir.path());
    assert_eq!(first.len(), 4);
    let header = |s: &str| s.lines().nth(1).unwrap().to_owned();
    for (name, content) in &first {
        assert!(name.starts_with("small.seed"), "{name}");
        assert_eq!(header(content), header(&first[0].1));
        assert_eq!(content.lines().count(), 2 + 25);
    }
    for i in 1..first.len() {
        assert_ne!(first[i].1, first[0].1);
    }

    let again = tempfile::tempdir().unwrap();
    let source = Source::load(dir.path().join(MANIFEST).to_str().unwrap()).unwrap();
    runner::execute(source.name(), source.targets(), &source.points(None).unwrap(), 1, again.path()).unwrap();
    assert_eq!(csvs(again.path()), first);
}

#[test]
fn report_aggregates_and_checks_targets() {
    let dir = tempfile::tempdir().unwrap();
    let source = Source::Scenario(ScenarioFile::parse(SMALL).unwrap());
    let points = source.points(Some("1..3".parse().unwrap())).unwrap();
    let targets = vec![Target {
        name: "no clones".into(),
        group: "small".into(),
        metric: "clones_completed".into(),
        ratio_of: None,
        from: 0,
        to: 25,
        min: None,
        max: Some(0.0),
    }];
    runner::execute("small", &targets, &points, 1, dir.path()).unwrap();
    let report = cmd_report(dir.path(), None).unwrap();
    assert_eq!(report.groups.len(), 1);
    assert_eq!(report.groups[0].seeds, 3);
    assert_eq!(report.failures(), 0);
    assert!(report.summary().contains("PASS no clones"));
    let merged = fs::read_to_string(dir.path().join("report/small.csv")).unwrap();
    assert!(merged.starts_with("cycle,seeds,malicious_link_fraction_mean,malicious_link_fraction_std"));
    assert_eq!(merged.lines().count(), 26);

    let strict = dir.path().join("strict.toml");
    fs::write(
        &strict,
        "[[target]]\nname = \"impossible\"\ngroup = \"small\"\nmetric = \"alive_correct\"\nfrom = 0\nto = 25\nmax = 1\n",
    )
    .unwrap();
    let status = bin().arg("report").arg(dir.path()).arg("--targets").arg(&strict).output().unwrap();
    assert_eq!(status.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&status.stdout).contains("FAIL impossible"));
}

#[test]
fn empty_directory_is_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(cmd_report(dir.path(), None), Err(CliError::MissingData(_))));
    let out = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_runs_into_the_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.toml");
    fs::write(&scenario, SMALL).unwrap();
    let out_dir = dir.path().join("env-out");
    let out = bin()
        .args(["run", scenario.to_str().unwrap(), "--seed-range", "5..6", "--workers", "2"])
        .env(runner::OUT_ENV, &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csvs(&out_dir).len(), 2);
    assert!(out_dir.join("small.seed5.csv").exists());
}

#[test]
fn binary_exit_codes_for_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    fs::write(&scenario, "[scenario]\nwarp = true\n").unwrap();
    let out = bin().args(["run", scenario.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp"));
    let out = bin().args(["run", "fig99"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
