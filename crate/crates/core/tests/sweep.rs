use std::fs;

use evacsim_core::scenario::parse_sweep_spec;
use evacsim_core::sweep::run_sweep;

const SPEC: &str = "kind = sweep
n = 300
p = 0.5
s = 4
mode = default, congestion
policy = p1
seed = 0..3
max_steps = 400
";

#[test]
fn two_configs_three_seeds() {
    let spec = parse_sweep_spec(SPEC).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run_sweep(&spec, dir.path(), Some(1)).unwrap();
    assert_eq!(result.rows.len(), 6);

    let mut runs = 0;
    let mut logs = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for f in fs::read_dir(&path).unwrap() {
                let name = f.unwrap().file_name().into_string().unwrap();
                if name.ends_with(".signs.csv") {
                    logs += 1;
                } else if name.ends_with(".csv") {
                    runs += 1;
                }
            }
        }
    }
    assert_eq!((runs, logs), (6, 6));

    let aggregate = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 7);
    let echo = fs::read_to_string(dir.path().join("config-echo.txt")).unwrap();
    assert_eq!(parse_sweep_spec(&echo).unwrap(), spec);

    let again = tempfile::tempdir().unwrap();
    run_sweep(&spec, again.path(), Some(2)).unwrap();
    assert_eq!(fs::read_to_string(again.path().join("aggregate.csv")).unwrap(), aggregate);
}

#[test]
fn empty_seed_list_is_rejected() {
    let mut spec = parse_sweep_spec(SPEC).unwrap();
    spec.seeds.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(run_sweep(&spec, dir.path(), Some(1)).is_err());
}
