//! Analytic gradients against central finite differences.

mod common;

use common::{encoder, max_rel_error, sequences, TOLERANCE};
use skelcon_core::contrastive::{
    step_end_to_end, step_memory_bank, step_queue, ContrastiveConfig, KeyQueue, MemoryBank,
    Paradigm,
};
use skelcon_core::encoder::{batch_grad, EncoderParams, HeadKind};
use skelcon_core::evaluation::{
    classifier_loss_grad, classifier_loss_input_grad, LinearClassifier,
};
use skelcon_core::{Params, RngStream};

fn queue_case(layers: usize, head: HeadKind, normalize: bool) -> f64 {
    let pq = encoder(layers, head, 1);
    let pk = encoder(layers, head, 2);
    let dim = pq.output_dim();
    let queue = KeyQueue::random(7, dim, &mut RngStream::new(3)).unwrap();
    let q = sequences(3, 6, 6, 4);
    let k = sequences(3, 6, 6, 5);
    let cfg = ContrastiveConfig {
        temperature: 0.5,
        queue_size: 7,
        batch_size: 3,
        normalize,
        ..Default::default()
    };
    let out = step_queue(&q, &k, &pq, &pk, &queue, &cfg).unwrap();
    max_rel_error(
        &pq,
        &out.grad_q,
        |p| step_queue(&q, &k, p, &pk, &queue, &cfg).unwrap().loss,
        11,
    )
}

#[test]
fn queue_single_layer() {
    let e = queue_case(1, HeadKind::None, false);
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn queue_two_layers() {
    let e = queue_case(2, HeadKind::None, false);
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn queue_linear_head() {
    let e = queue_case(1, HeadKind::Linear, false);
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn queue_nonlinear_head() {
    let e = queue_case(2, HeadKind::Nonlinear, false);
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn queue_normalized_representations() {
    let e = queue_case(2, HeadKind::None, true);
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn end_to_end_both_encoders() {
    let pq = encoder(2, HeadKind::None, 6);
    let pk = encoder(2, HeadKind::None, 7);
    let q = sequences(4, 5, 6, 8);
    let k = sequences(4, 5, 6, 9);
    let cfg = ContrastiveConfig {
        temperature: 0.5,
        batch_size: 4,
        paradigm: Paradigm::EndToEnd,
        ..Default::default()
    };
    let out = step_end_to_end(&q, &k, &pq, &pk, &cfg).unwrap();
    let eq = max_rel_error(
        &pq,
        &out.grad_q,
        |p| step_end_to_end(&q, &k, p, &pk, &cfg).unwrap().loss,
        12,
    );
    let gk = out.grad_k.expect("end-to-end returns key gradients");
    let ek = max_rel_error(
        &pk,
        &gk,
        |p| step_end_to_end(&q, &k, &pq, p, &cfg).unwrap().loss,
        13,
    );
    assert!(eq < TOLERANCE && ek < TOLERANCE, "query {eq}, key {ek}");
}

#[test]
fn memory_bank_query_encoder() {
    let pq = encoder(1, HeadKind::None, 14);
    let bank = MemoryBank::random(9, 5, 0.5, &mut RngStream::new(15)).unwrap();
    let q = sequences(3, 6, 6, 16);
    let idx = [2, 5, 7];
    let cfg = ContrastiveConfig {
        temperature: 0.5,
        queue_size: 4,
        paradigm: Paradigm::MemoryBank,
        ..Default::default()
    };
    let rng = RngStream::new(17);
    let out = step_memory_bank(&q, &idx, &pq, &mut bank.clone(), &cfg, &rng).unwrap();
    let e = max_rel_error(
        &pq,
        &out.grad_q,
        |p| {
            step_memory_bank(&q, &idx, p, &mut bank.clone(), &cfg, &rng)
                .unwrap()
                .loss
        },
        18,
    );
    assert!(e < TOLERANCE, "max relative error {e}");
}

#[test]
fn linear_classifier() {
    let mut rng = RngStream::new(19);
    let mut clf = LinearClassifier::zeros(5, 8);
    for t in clf.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.normal();
        }
    }
    let feats: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..8).map(|_| rng.normal()).collect())
        .collect();
    let labels: Vec<usize> = (0..12).map(|i| i % 5).collect();
    let (_, g) = classifier_loss_grad(&clf, &feats, &labels).unwrap();
    let e = max_rel_error(
        &clf,
        &g,
        |c| classifier_loss_grad(c, &feats, &labels).unwrap().0,
        20,
    );
    assert!(e < 1e-6, "max relative error {e}");
}

#[test]
fn classifier_through_encoder() {
    let p = encoder(2, HeadKind::None, 21);
    let mut rng = RngStream::new(22);
    let mut clf = LinearClassifier::zeros(3, 5);
    for t in clf.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.normal();
        }
    }
    let x = sequences(4, 5, 6, 23);
    let labels = [0, 1, 2, 1];
    let loss_of = |p: &EncoderParams| {
        batch_grad(
            p,
            &x,
            Box::new(|reps: &[Vec<f64>]| {
                let (l, _) = classifier_loss_grad(&clf, reps, &labels)?;
                Ok((l, vec![vec![0.0; reps[0].len()]; reps.len()]))
            }),
        )
        .unwrap()
        .0
    };
    let (_, g) = batch_grad(
        &p,
        &x,
        Box::new(|reps: &[Vec<f64>]| {
            let (l, _, d) = classifier_loss_input_grad(&clf, reps, &labels)?;
            Ok((l, d))
        }),
    )
    .unwrap();
    let e = max_rel_error(&p, &g, loss_of, 24);
    assert!(e < TOLERANCE, "max relative error {e}");
}
