use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| v.to_string().parse().unwrap())
}

fn out(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

#[test]
fn trace_writes_one_row_per_step() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "t.csv");
    let o = cmc(&["trace", "--kappa", "-1", "--lambda", "1.5", "--smax", "2", "--out", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(!text.contains('\r'));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().len(), 10);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2001);
    let worst = rows.iter().map(|x| x[9].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "residual {worst}");
    let run = json(Path::new(&format!("{p}.run.json")));
    assert_eq!(run["config"]["subcommand"], "trace");
}

#[test]
fn sphere_report_and_mesh() {
    let d = TempDir::new().unwrap();
    let (p, m) = (out(&d, "s.json"), out(&d, "s.obj"));
    let o = cmc(&["sphere", "--kappa", "0", "--lambda", "1", "--n-theta", "32", "--n-s", "33", "--mesh", &m, "--out", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(Path::new(&p));
    let area = num(&v["report"]["area"]);
    assert!((area - PI * PI).abs() < 1e-6 * PI * PI, "area {area}");
    assert!(num(&v["report"]["pole_spread"]) < 1e-6);
    let obj = std::fs::read_to_string(&m).unwrap();
    let nv = obj.lines().filter(|l| l.starts_with("v ")).count();
    assert_eq!(nv, 32 * 31 + 2);
    let attr = std::fs::read_to_string(format!("{m}.attr.csv")).unwrap();
    assert_eq!(attr.lines().count(), nv + 1);
}

#[test]
fn parallel_variation_is_unstable() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "p.json");
    let o = cmc(&["stability", "--mode", "parallel", "--kappa", "0", "--lambda", "1", "--out", &p]);
    assert_eq!(code(&o), 1);
    let v = json(Path::new(&p));
    assert_eq!(v["report"]["verdict"], "fail");
    assert!((num(&v["report"]["value"]) + 2.0 * PI * PI).abs() < 1e-3);
}

#[test]
fn meanzero_scan_passes_and_is_reproducible() {
    let d = TempDir::new().unwrap();
    let (a, b) = (out(&d, "a.json"), out(&d, "b.json"));
    for p in [&a, &b] {
        let o = cmc(&["stability", "--mode", "meanzero", "--kappa", "0.5", "--lambda", "1", "--trials", "100", "--seed", "7", "--out", p]);
        assert_eq!(code(&o), 0);
    }
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    let strip = |s: &str| s.replace(&a, "").replace(&b, "");
    assert_eq!(strip(&ta), strip(&tb));
    assert_eq!(json(Path::new(&a))["report"]["values"].as_array().unwrap().len(), 100);
}

#[test]
fn fd_crosscheck_passes() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "f.json");
    let o = cmc(&["stability", "--mode", "fd", "--kappa", "0", "--lambda", "1", "--profile", "sin2", "--out", &p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn isoperimetric_winners() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "i.json");
    assert_eq!(code(&cmc(&["isoper", "--volume", "39.478", "--out", &p])), 0);
    assert_eq!(json(Path::new(&p))["report"]["winner"], "torus");
    assert_eq!(code(&cmc(&["isoper", "--volume", "1", "--out", &p])), 0);
    assert_eq!(json(Path::new(&p))["report"]["winner"], "sphere");
    assert_eq!(code(&cmc(&["isoper", "--volume", "70", "--out", &p])), 2);
}

#[test]
fn isoperimetric_scan_and_table() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "sc.json");
    assert_eq!(code(&cmc(&["isoper", "--scan", "--out", &p])), 0);
    let v = json(Path::new(&p));
    assert!((num(&v["report"]["v_low"]) - 27.0 * PI * PI / 8.0).abs() < 1e-6);
    assert!((num(&v["report"]["v_high"]) - 6.0 * PI * PI).abs() < 1e-6);
    let t = out(&d, "t.csv");
    assert_eq!(code(&cmc(&["isoper", "--table", "--vmin", "1", "--vmax", "80", "--n", "9", "--out", &t])), 0);
    let text = std::fs::read_to_string(&t).unwrap();
    assert_eq!(text.lines().next().unwrap(), "volume,sphere_area,torus_area,winner");
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn holonomy_is_twice_the_area() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "h.json");
    for args in [
        vec!["holonomy", "--kappa", "0", "--radius", "0.7", "--center", "0.3,-0.2"],
        vec!["holonomy", "--kappa", "-2", "--curve", "star", "--radius", "0.3"],
        vec!["holonomy", "--kappa", "3", "--curve", "cap", "--radius", "0.8"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", p.as_str()]);
        let o = cmc(&a);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(num(&json(Path::new(&p))["report"]["error"]) < 1e-6);
    }
}

#[test]
fn usage_errors_exit_two() {
    let d = TempDir::new().unwrap();
    let p = out(&d, "x.json");
    assert_eq!(code(&cmc(&["sphere", "--kappa", "nope", "--lambda", "1", "--out", &p])), 2);
    assert_eq!(code(&cmc(&["sphere", "--kappa", "1", "--lambda", "1"])), 2);
    assert_eq!(code(&cmc(&["sphere", "--kappa", "-1", "--lambda", "0.5", "--out", &p])), 2);
    assert_eq!(code(&cmc(&["stability", "--mode", "meanzero", "--kappa", "0", "--lambda", "1", "--truncation", "8", "--out", &p])), 2);
    assert_eq!(code(&cmc(&["holonomy", "--kappa", "1", "--out", &p])), 2);
    assert_eq!(code(&cmc(&["bogus"])), 2);
    assert!(!Path::new(&p).exists());
}
