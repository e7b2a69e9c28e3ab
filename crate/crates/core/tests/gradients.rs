use hgin_core::checks::{self, CheckResult};

fn assert_all(results: &[CheckResult]) {
    for r in results {
        println!("{}", r.summary());
    }
    assert!(results.iter().all(CheckResult::passed));
}

#[test]
fn hypergraph_layer_gradients() {
    assert_all(&[checks::hypergraph_check().unwrap()]);
}

#[test]
fn gated_conv_gradients() {
    assert_all(&[checks::gated_check().unwrap()]);
}

#[test]
fn loss_gradients() {
    let r = checks::loss_checks().unwrap();
    assert_eq!(r.len(), 5);
    assert_all(&r);
}

#[test]
fn generator_gradients() {
    assert_all(&[checks::generator_check().unwrap()]);
}
