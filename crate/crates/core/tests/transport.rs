//! Socket sessions, wire errors and the command-line binary.

mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command};
use std::thread;

use sqkd_core::channel::{parse_eve_strategy, ChannelPlan};
use sqkd_core::harness::{self, serve_on, BobRole, HarnessError, Transport, WireError};

use common::{config, run_over_sockets};

const BIN: &str = env!("CARGO_BIN_EXE_sqkd");

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn sqkd(args: &[&str]) -> Command {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SQKD_OUT_DIR");
    cmd
}

fn serve(role: &str, port: u16, seed: &str) -> Child {
    sqkd(&["serve", "--role", role, "--listen", &format!("127.0.0.1:{port}"), "--seed", seed])
        .spawn()
        .unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn three_processes_match_the_in_process_run() {
    let local = tempfile::tempdir().unwrap();
    let remote = tempfile::tempdir().unwrap();
    let common_args = ["run", "--rounds", "4000", "--seed", "99", "--eve", "bob2:bwd:f", "--threshold", "1"];

    let status = sqkd(&common_args)
        .args(["--out-dir", local.path().to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));

    let (p1, p2) = (free_port(), free_port());
    let mut bob1 = serve("bob1", p1, "99");
    let mut bob2 = serve("bob2", p2, "99");
    let status = sqkd(&common_args)
        .args(["--transport", "socket"])
        .args(["--bob1-addr", &format!("127.0.0.1:{p1}")])
        .args(["--bob2-addr", &format!("127.0.0.1:{p2}")])
        .args(["--out-dir", remote.path().to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(bob1.wait().unwrap().success());
    assert!(bob2.wait().unwrap().success());

    for f in ["report.json", "transcript.jsonl", "eve.jsonl", "categories.csv", "keys/layer2_bob2.txt"] {
        assert_eq!(read(local.path(), f), read(remote.path(), f), "{f}");
    }
}

#[test]
fn exit_codes_distinguish_abort_from_error() {
    let ok = sqkd(&["run", "--rounds", "500", "--seed", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let aborted = sqkd(&["run", "--rounds", "500", "--seed", "1", "--eve", "bob1:z", "--threshold", "0.05"])
        .output()
        .unwrap();
    assert_eq!(aborted.status.code(), Some(2));

    for bad in [
        vec!["run", "--rounds", "0"],
        vec!["run", "--protocol", "tlsqsc"],
        vec!["run", "--threshold", "1.5"],
        vec!["run", "--eve", "carol:z"],
        vec!["run", "--loss", "2"],
    ] {
        let out = sqkd(&bad).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn messaging_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqkd(&["run", "--rounds", "2000", "--seed", "5", "--protocol", "tlsqsc", "--message", "trits:0121021"])
        .env("SQKD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(dir.path(), "decoded.txt").trim(), "0121021");
    let cipher = read(dir.path(), "ciphertext.txt");
    assert_eq!(cipher.trim().len(), 7);
}

#[test]
fn oracle_subcommand_prints_every_category() {
    let out = sqkd(&["oracle", "--eve", "bob1:z"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains("S2-RR,0.888888888889,0.000000000000,0.888888888889"), "{text}");
}

#[test]
fn socket_runs_agree_under_loss_and_attack() {
    let cfg = config(3_000, 123, parse_eve_strategy("both:both:z").unwrap());
    let local = harness::run(&cfg).unwrap();
    let remote = run_over_sockets(&cfg);
    assert_eq!(local.report, remote.report);
    assert_eq!(local.transcript, remote.transcript);
}

/// Plays Alice by hand against a Bob server and returns its error.
fn bob_error_after(lines: &[&str]) -> HarnessError {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let bob = thread::spawn(move || serve_on(listener, BobRole::Bob2, 1));
    let mut stream = TcpStream::connect(addr).unwrap();
    for l in lines {
        writeln!(stream, "{l}").unwrap();
    }
    drop(stream);
    bob.join().unwrap().unwrap_err()
}

#[test]
fn malformed_lines_name_their_line_number() {
    let ok = "QUDIT 0 bob2 fwd 3 1.0e0,0.0e0 0.0e0,0.0e0 0.0e0,0.0e0";
    match bob_error_after(&[ok, "QUDIT 1 bob2 fwd 3 1.0e0,0.0e0 oops"]) {
        HarnessError::Wire(e @ WireError::Malformed { .. }) => assert_eq!(e.line(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unnormalized_amplitudes_are_a_protocol_violation() {
    match bob_error_after(&["QUDIT 0 bob2 fwd 3 1.0e0,0.0e0 1.0e-2,0.0e0 0.0e0,0.0e0"]) {
        HarnessError::Wire(e @ WireError::ProtocolViolation { .. }) => assert_eq!(e.line(), 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dropped_peer_leaves_the_session_incomplete() {
    // bob2 answers the first round and then disappears
    let l1 = TcpListener::bind("127.0.0.1:0").unwrap();
    let l2 = TcpListener::bind("127.0.0.1:0").unwrap();
    let a1 = l1.local_addr().unwrap().to_string();
    let a2 = l2.local_addr().unwrap().to_string();
    let bob1 = thread::spawn(move || serve_on(l1, BobRole::Bob1, 8));
    let bob2 = thread::spawn(move || {
        let (s, _) = l2.accept().unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
    });
    let mut cfg = config(200, 8, ChannelPlan::identity());
    cfg.transport = Transport::Socket { bob1: a1, bob2: a2 };
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = Some(dir.path().to_path_buf());
    let err = harness::run(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::ConnectionLost(_)), "{err:?}");
    assert!(!dir.path().join("keys").exists());
    bob2.join().unwrap();
    // bob1 sees Alice vanish too
    assert!(bob1.join().unwrap().is_err());
}
