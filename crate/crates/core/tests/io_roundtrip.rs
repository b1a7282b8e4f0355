use coralsim::io::config::{emit_config, load_config, parse_config};
use coralsim::io::csv::{read_diagnostics_file, CsvSink};
use coralsim::io::manifest::{read_manifest, RunManifest};
use coralsim::io::snapshot::{encode_snapshot, read_snapshot, write_snapshot, MAGIC};
use coralsim::stepping::{run, SimState, Stepper};
use coralsim::Error;

const CONFIG: &str = r#"
[grid]
cells = [12, 10]
extent = [1.2, 1.0]
advection = "minmod"

[model]
alpha = 0.75
chi0 = 2.0
s0_slope = 0.25
rotation = 0.3
eps = 0.05

[fluid]
kappa = 0.5
phi_gradient = [0.0, -2.0, 0.0]

[time]
t_end = 0.05
dt = 0.005
max_steps = 100

[diagnostics]
every = 2
p = 3.0

[initial]
vortex = 0.4

[initial.n]
mean = 2.0
modes = [{ amplitude = 0.5, k = [1, 1, 0] }]

[initial.m]
mean = 1.0
bumps = [{ amplitude = 0.3, center = [0.6, 0.5, 0.5], width = 0.15 }]

[initial.c]
mean = 1.5
"#;

#[test]
fn config_echo_round_trips() {
    let cfg = parse_config(CONFIG).unwrap();
    let text = emit_config(&cfg).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
    assert_eq!(emit_config(&parse_config(&text).unwrap()).unwrap(), text);
}

#[test]
fn shipped_example_config_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/plume_2d.toml");
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.grid.dims(), [32, 32, 1]);
}

#[test]
fn csv_file_round_trips_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(CONFIG).unwrap();
    let path = dir.path().join("diag.csv");
    let mut sink = CsvSink::create(&path).unwrap();
    run(&cfg, &mut sink).unwrap();
    drop(sink);
    let mut records = Vec::new();
    run(&cfg, &mut records).unwrap();
    assert_eq!(read_diagnostics_file(&path).unwrap(), records);
    assert_eq!(records.len(), 6);
}

#[test]
fn snapshot_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(CONFIG).unwrap();
    let mut s = SimState::initial(&cfg).unwrap();
    let stepper = Stepper::new(&cfg).unwrap();
    for _ in 0..3 {
        stepper.step(&mut s).unwrap();
    }
    let path = dir.path().join("state.bin");
    write_snapshot(&s, &path).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(encode_snapshot(&back), encode_snapshot(&s));
    assert_eq!(back.t.to_bits(), s.t.to_bits());
    assert_eq!(back.n.values(), s.n.values());
    assert!(!dir.path().join("state.tmp").exists());
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let cfg = parse_config(CONFIG).unwrap();
    let bytes = encode_snapshot(&SimState::initial(&cfg).unwrap());
    let decode = coralsim::io::snapshot::decode_snapshot;
    assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Snapshot(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode(&extra), Err(Error::Snapshot(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode(&magic), Err(Error::Snapshot(_))));
    let mut version = bytes.clone();
    version[MAGIC.len()] = 99;
    assert!(matches!(decode(&version), Err(Error::Snapshot(_))));
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(CONFIG).unwrap();
    let path = dir.path().join("manifest.json");
    let m = RunManifest::new(&cfg, &dir.path().join("diag.csv")).unwrap();
    m.write_atomic(&path).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(parse_config(&back.config).unwrap(), cfg);
}
