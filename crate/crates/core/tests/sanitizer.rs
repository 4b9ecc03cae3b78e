mod common;

use common::props;
use common::sanitizer_oracle::{load_table, Oracle};
use dbgchat_core::sanitizer::{sanitize, SanitizerPolicy, Verdict};
use proptest::prelude::*;
use std::sync::LazyLock;

static ORACLE: LazyLock<Oracle> = LazyLock::new(Oracle::new);

#[test]
fn verdict_table() {
    let cases = load_table();
    assert_eq!(cases.len(), 50);
    let mismatches: Vec<String> = cases
        .iter()
        .filter(|c| sanitize(&c.command, &c.policy.to_policy()).is_allow() != c.allow)
        .map(|c| format!("line {}: {:?} under {:?}", c.line, c.command, c.policy))
        .collect();
    assert!(mismatches.is_empty(), "{mismatches:#?}");
}

#[test]
fn oracle_agrees_with_the_table() {
    let oracle = Oracle::new();
    for c in load_table() {
        assert_eq!(
            oracle.allows(&c.command, &c.policy),
            c.allow,
            "line {}",
            c.line
        );
    }
}

#[test]
fn denials_say_why() {
    let strict = SanitizerPolicy::native_strict();
    let reason = |cmd: &str| match sanitize(cmd, &strict) {
        Verdict::Deny(r) => r,
        Verdict::Allow => panic!("{cmd} allowed"),
    };
    assert_eq!(reason("continue"), "resumes or leaves the target: continue");
    assert_eq!(reason("call unlink(\"x\")"), "function call: unlink");
    assert_eq!(reason("set var x = 3"), "command not allowed: set");
    assert_eq!(reason("p x = 3"), "modifies program state: =");
}

#[test]
fn whitelist_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("allowed.txt");
    std::fs::write(&path, "# functions\nstrlen\n\nabs\n").unwrap();
    let policy = SanitizerPolicy::whitelist_file(&path).unwrap();
    assert!(sanitize("p strlen(name)", &policy).is_allow());
    assert!(!sanitize("p free(name)", &policy).is_allow());
    assert!(SanitizerPolicy::from_flags(true, Some(policy.clone())).is_unsafe());
    assert_eq!(
        SanitizerPolicy::from_flags(false, Some(policy.clone())),
        policy
    );
    assert!(!SanitizerPolicy::from_flags(false, None).is_unsafe());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn whitelist_monotonicity_and_unsafe_superset(cmd in props::arb_command(), (small, big) in props::arb_whitelists()) {
        props::check_policy_order(&cmd, &small, &big, &ORACLE)?;
    }

    #[test]
    fn sanitize_is_pure(cmd in "\\PC{0,40}") {
        let p = SanitizerPolicy::native_strict();
        prop_assert_eq!(sanitize(&cmd, &p), sanitize(&cmd, &p));
    }
}
