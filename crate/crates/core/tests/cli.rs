mod common;

use std::path::Path;
use std::process::{Command, Output};

use navstack::eval::{load_log, EpisodeLog};

fn navstack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navstack"))
        .args(args)
        .env("NAVSTACK_OUT", out)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn single_log(dir: &Path) -> EpisodeLog {
    let entry = std::fs::read_dir(dir.join("episodes")).unwrap().next().unwrap().unwrap();
    load_log(&entry.path()).unwrap()
}

#[test]
fn oracle_run_succeeds_and_writes_log_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let o = navstack(
        &["run", "--world", world.to_str().unwrap(), "--policy", "oracle", "--target", "chair", "--start", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let dir = tmp.path().join("run-oracle-chair-s03-seed0");
    let log = single_log(&dir);
    assert_eq!(log.id, "oracle-chair-s03");
    assert!(text(&o).contains("success=true"), "{}", text(&o));
    assert!(dir.join("plots/oracle-chair-s03.svg").exists());
    assert!(dir.join("report.json").exists());
}

#[test]
fn failed_navigation_still_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let script = tmp.path().join("script.txt");
    std::fs::write(&script, "TURN_LEFT TURN_LEFT\nSTOP\n").unwrap();
    let o = navstack(
        &[
            "run", "--world", world.to_str().unwrap(), "--policy", "external", "--script", script.to_str().unwrap(),
            "--target", "toilet", "--start", "6",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("success=false"));
}

#[test]
fn missing_world_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = navstack(&["run", "--world", "/no/such/world.json", "--target", "chair"], tmp.path());
    assert!(!o.status.success());
    assert!(text(&o).contains("/no/such/world.json"), "{}", text(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = navstack(&["run", "--target", "chair"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = navstack(&["run", "--world", "x.json", "--target", "lamp"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    std::fs::write(&cfg, "discrete_move.linear_velocity: -1\n").unwrap();
    let world = common::apartment_path();
    let o = navstack(
        &["run", "--world", world.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--target", "chair"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn category_filter_limits_the_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let o = navstack(
        &["suite", "--world", world.to_str().unwrap(), "--policy", "random", "--categories", "chair,sofa", "--seed", "4"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let dir = tmp.path().join("suite-random-seed4");
    assert_eq!(std::fs::read_dir(dir.join("episodes")).unwrap().count(), 30);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["overall"]["episodes"], 30);
}

#[test]
fn random_suite_rerun_is_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let args = ["suite", "--world", world.to_str().unwrap(), "--policy", "random", "--categories", "plant", "--seed", "9"];
    assert!(navstack(&args, a.path()).status.success());
    let mut par = args.to_vec();
    par.extend(["--parallel", "2"]);
    assert!(navstack(&par, b.path()).status.success());
    let ra = std::fs::read(a.path().join("suite-random-seed9/report.json")).unwrap();
    let rb = std::fs::read(b.path().join("suite-random-seed9/report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn replay_of_a_clean_log_stays_in_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let w = world.to_str().unwrap();
    let o = navstack(&["run", "--world", w, "--policy", "oracle", "--target", "sofa", "--start", "2"], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    let log = tmp.path().join("run-oracle-sofa-s02-seed0/episodes/oracle-sofa-s02.json");
    let o = navstack(&["replay", log.to_str().unwrap(), "--world", w], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(log.with_extension("replay.svg").exists());
}

#[test]
fn replay_of_a_noisy_log_stays_in_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let w = world.to_str().unwrap();
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/realistic.conf");
    let c = conf.to_str().unwrap();
    let o = navstack(
        &["run", "--world", w, "--config", c, "--policy", "random", "--target", "bed", "--start", "5", "--seed", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let log = tmp.path().join("run-random-bed-s05-seed3/episodes/random-bed-s05.json");
    let o = navstack(&["replay", log.to_str().unwrap(), "--world", w, "--config", c], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn replay_against_another_world_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let o = navstack(
        &["run", "--world", world.to_str().unwrap(), "--policy", "random", "--target", "chair"],
        tmp.path(),
    );
    assert!(o.status.success());
    let other = tmp.path().join("room.json");
    std::fs::write(&other, common::open_room(6.0).to_json()).unwrap();
    let log = tmp.path().join("run-random-chair-s01-seed0/episodes/random-chair-s01.json");
    let o = navstack(&["replay", log.to_str().unwrap(), "--world", other.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("world"), "{}", text(&o));
}

#[test]
fn replay_of_an_empty_log_returns_the_start_pose() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let w = world.to_str().unwrap();
    assert!(navstack(&["run", "--world", w, "--policy", "random", "--target", "chair"], tmp.path()).status.success());
    let path = tmp.path().join("run-random-chair-s01-seed0/episodes/random-chair-s01.json");
    let mut log = load_log(&path).unwrap();
    log.actions.clear();
    log.final_pose = log.start_pose;
    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, serde_json::to_string(&log).unwrap()).unwrap();
    let o = navstack(&["replay", empty.to_str().unwrap(), "--world", w], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("replayed 0 actions: final pose off by 0.0000 m"), "{}", text(&o));
}

#[test]
fn missing_log_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let o = navstack(&["replay", "/no/such/log.json", "--world", world.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("/no/such/log.json"));
}

#[test]
fn topology_dump_lists_the_wired_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let world = common::apartment_path();
    let o = navstack(&["topology", "--world", world.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    for needle in ["/discrete_move", "/cmd_vel", "/odom", "/camera/"] {
        assert!(out.contains(needle), "{needle} missing from\n{out}");
    }
}
