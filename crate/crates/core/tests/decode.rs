//! Streaming decoder: unread source never influences a write.

mod common;

use common::{random_tokens, tiny_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simt_core::decode::{batch_decode, default_max_len, stream_decode, Action};
use simt_core::model::ModelParams;
use simt_core::parallel::Execution;
use simt_core::policy::{PolicySpec, ReadSchedule};

fn writes_up_to(actions: &[Action], count: usize) -> Vec<Action> {
    let mut out = Vec::new();
    let mut seen = 0;
    for &a in actions {
        if seen == count {
            break;
        }
        if matches!(a, Action::Write(_)) {
            seen += 1;
        }
        out.push(a);
    }
    out
}

#[test]
fn replacing_unread_source_keeps_every_write() {
    let params = ModelParams::<f64>::init(&tiny_config(16, 2), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut writes = 0;
    for _ in 0..60 {
        let len = rng.gen_range(1..=8);
        let src = random_tokens(&mut rng, len);
        let policy = PolicySpec::WaitK {
            k: rng.gen_range(1..=3),
        };
        let trace = stream_decode(&params, &src, &policy, 12).unwrap();
        writes += trace.output.len();
        for (step, &g) in trace.reads_at_write.iter().enumerate() {
            let mut other = src.clone();
            for t in other.iter_mut().skip(g) {
                *t = rng.gen_range(4..common::VOCAB as u32);
            }
            let again = stream_decode(&params, &other, &policy, 12).unwrap();
            assert_eq!(
                writes_up_to(&again.actions, step + 1),
                writes_up_to(&trace.actions, step + 1),
                "source {src:?} step {}",
                step + 1
            );
        }
    }
    assert!(writes > 0, "the model never wrote a token");
}

#[test]
fn any_checkpoint_decodes_under_any_test_latency() {
    let params = ModelParams::<f32>::init(&tiny_config(8, 1), 2);
    let sources: Vec<Vec<u32>> = (0..4).map(|i| vec![4 + i, 5, 6, 7, 8]).collect();
    for policy in [
        PolicySpec::WaitK { k: 1 },
        PolicySpec::WaitK { k: 9 },
        PolicySpec::Full,
        PolicySpec::Hmt {
            l: 2,
            n: 3,
            event: 2,
        },
    ] {
        let traces = batch_decode(
            &params,
            &sources,
            &policy,
            default_max_len,
            Execution::Sequential,
        )
        .unwrap();
        for (t, src) in traces.iter().zip(&sources) {
            for (i, &g) in t.reads_at_write.iter().enumerate() {
                let allowed = policy.reads_before(i + 1, src.len()).clamp(1, src.len());
                assert!(
                    g >= allowed.min(src.len()),
                    "{policy}: wrote before reading {allowed}"
                );
            }
            if !t.reads_at_write.is_empty() {
                assert!(t.reads_at_write.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}

#[test]
fn parallel_and_sequential_decoding_agree() {
    let params = ModelParams::<f32>::init(&tiny_config(16, 1), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sources: Vec<Vec<u32>> = (0..16)
        .map(|_| {
            let len = rng.gen_range(1..=7);
            random_tokens(&mut rng, len)
        })
        .collect();
    let policy = PolicySpec::WaitK { k: 2 };
    let seq = batch_decode(
        &params,
        &sources,
        &policy,
        default_max_len,
        Execution::Sequential,
    )
    .unwrap();
    let par = batch_decode(
        &params,
        &sources,
        &policy,
        default_max_len,
        Execution::Parallel,
    )
    .unwrap();
    assert_eq!(seq, par);
}
