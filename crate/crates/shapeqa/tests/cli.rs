use std::process::Command;

fn shapeqa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_shapeqa")).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(shapeqa(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(shapeqa(&["--bogus-flag", "print-config"]).status.code(), Some(2));
    assert_eq!(shapeqa(&[]).status.code(), Some(2));
}

#[test]
fn failures_print_a_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapeqa(&["--out-dir", dir.path().to_str().unwrap(), "train-vae"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: kind=io message="), "{stderr}");

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "vae.latent_dim = many\n").unwrap();
    let out = shapeqa(&["--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "print-config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=config"));
}

#[test]
fn print_config_covers_every_key_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapeqa(&["--out-dir", dir.path().to_str().unwrap(), "print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["vae.lambda_kl", "preprocess.rotation_degrees", "corruption.punch_holes", "regressor.feature_mode", "direct.hidden_units"] {
        assert!(text.contains(key), "{key} missing");
    }
    let cfg = dir.path().join("all.conf");
    std::fs::write(&cfg, &text).unwrap();
    let again = shapeqa(&["--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "print-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}
