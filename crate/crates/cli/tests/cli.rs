use std::process::{Command, Output};

fn owm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn lp_of_the_block_is_six() {
    let o = owm(&["lp", "budget-block"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("value: 6"), "{}", stdout(&o));
}

#[test]
fn bruteforce_on_the_block_is_five() {
    let o = owm(&["--format", "json", "run", "--policy", "bruteforce", "budget-block"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["welfare"], 5.0);
}

#[test]
fn generated_instances_round_trip_through_files() {
    let dir = std::env::temp_dir().join(format!("owm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("staged.json");
    let p = path.to_str().unwrap();
    let o = owm(&[
        "--seed", "3", "-o", p, "gen", "staged", "--k", "3", "--n", "3", "--s", "2", "--t", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = owm(&["--seed", "9", "--format", "json", "run", p]);
    let b = owm(&["--seed", "9", "--format", "json", "run", p]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn staged_integral_reports_the_ratio() {
    let o = owm(&["bounds", "staged-integral", "--t", "100"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.6114928"), "{}", stdout(&o));
}

#[test]
fn g_curve_as_csv() {
    let o = owm(&["--format", "csv", "bounds", "g", "--points", "5"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().next(), Some("x,value"));
    assert_eq!(s.lines().count(), 6);
}

#[test]
fn quick_verify_passes() {
    let o = owm(&["verify", "dr"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("[PASS]"));
}

#[test]
fn missing_instance_file_exits_two() {
    let o = owm(&["run", "/nonexistent/instance.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_arguments_are_rejected() {
    assert_eq!(
        owm(&["bounds", "harmonic", "--m", "3", "--t", "5", "--j", "5"])
            .status
            .code(),
        Some(2)
    );
    assert!(!owm(&["frobnicate"]).status.success());
}
