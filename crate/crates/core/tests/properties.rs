mod common;

use proptest::prelude::*;
use stagewise::corpus::generators::make_sentence_distance;
use stagewise::corpus::{
    decode_instances, decode_permutation, encode_instances, encode_permutation, factorial, instance_rng,
    inverse_permutation, make_capitalization, make_knowledge_masking, make_sentence_reordering,
    make_token_document_relation, GeneratorConfig, InstanceFormat, ReorderingLabelSpace, TaskInstance, TaskKind,
};
use stagewise::scheduler::{build_schedule, stage_order, DataStream, Strategy as Plan};

fn strategy() -> impl Strategy<Value = Plan> {
    prop_oneof![
        Just(Plan::Continual),
        Just(Plan::Multitask),
        Just(Plan::ContinualMultitask)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_task_gets_its_budget(
        t in 1usize..=6,
        extra in 0usize..=3,
        budget in 1u64..=5000,
        reserve_frac in 0.0f64..=1.0,
        strategy in strategy(),
    ) {
        let stages = t + extra;
        let max_reserve = if stages > 1 { budget / (stages as u64 - 1) } else { 0 };
        let reserve = (reserve_frac * max_reserve as f64) as u64;
        let tasks: Vec<u16> = (0..t as u16).rev().collect();
        let plan = build_schedule(&tasks, budget, stages, strategy, reserve).unwrap();
        for (k, &task) in tasks.iter().enumerate() {
            let column: u64 = plan.allocation.iter().map(|row| row[k]).sum();
            prop_assert_eq!(column, budget);
            let run: u64 = (0..plan.stage_count())
                .map(|s| stage_order(&plan, s).iter().filter(|&&x| x == task).count() as u64)
                .sum();
            prop_assert_eq!(run, budget);
        }
        if strategy == Plan::ContinualMultitask && budget > stages as u64 * reserve {
            for k in 0..t {
                let row = &plan.allocation[k];
                prop_assert!(row.iter().enumerate().all(|(j, &v)| j == k || v < row[k]));
            }
        }
    }

    #[test]
    fn infeasible_reserve_is_rejected(budget in 1u64..1000, stages in 2usize..=6) {
        let reserve = budget / (stages as u64 - 1) + 1;
        let tasks: Vec<u16> = (0..stages as u16).collect();
        prop_assert!(build_schedule(&tasks, budget, stages, Plan::ContinualMultitask, reserve).is_err());
    }

    #[test]
    fn permutation_rank_round_trips(perm in (1usize..=10).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())) {
        let rank = encode_permutation(&perm).unwrap();
        prop_assert!(rank < factorial(perm.len()));
        prop_assert_eq!(decode_permutation(perm.len(), rank).unwrap(), perm.clone());
        let inv = inverse_permutation(&perm);
        prop_assert!((0..perm.len()).all(|i| perm[inv[i]] == i));
    }

    #[test]
    fn reordering_labels_are_dense(m in 1usize..=6, label_frac in 0.0f64..1.0) {
        let space = ReorderingLabelSpace::new(m).unwrap();
        let label = (label_frac * space.class_count() as f64) as u32;
        let perm = space.decode(label).unwrap();
        prop_assert_eq!(space.label(&perm).unwrap(), label);
    }

    #[test]
    fn generated_instances_validate_and_round_trip(seed in 0u64..10_000, max_len in 12usize..=40) {
        let docs = common::toy_docs(6, seed);
        let config = GeneratorConfig { max_seq_len: max_len, ..GeneratorConfig::default() };
        let space = ReorderingLabelSpace::new(3).unwrap();
        let mut all: Vec<TaskInstance> = Vec::new();
        for doc in &docs {
            let mut rng = instance_rng(seed, &doc.id, TaskKind::KnowledgeMasking, 0);
            all.push(make_knowledge_masking(doc, 29, &config, &mut rng).unwrap());
            all.push(make_capitalization(doc, &config).unwrap());
            all.push(make_sentence_reordering(doc, &space, &config, &mut rng).unwrap());
            if doc.sentences.len() > 1 {
                all.push(make_token_document_relation(doc, 0, &config).unwrap());
            }
        }
        let mut rng = instance_rng(seed, "pairs", TaskKind::SentenceDistance, 0);
        all.push(make_sentence_distance(&docs, &config, &mut rng).unwrap());
        for inst in &all {
            prop_assert!(inst.validate(max_len).is_ok(), "{:?}", inst.validate(max_len));
        }
        for format in [InstanceFormat::Binary, InstanceFormat::Text] {
            let bytes = encode_instances(&all, format).unwrap();
            prop_assert_eq!(&decode_instances(&bytes).unwrap(), &all);
        }
    }

    #[test]
    fn stream_seek_matches_sequential_reads(n in 1u32..20, seed in 0u64..1000, at in 0u64..60) {
        let insts: Vec<TaskInstance> = (0..n)
            .map(|i| {
                let mut inst = TaskInstance::from_segments(0, &[&[5 + i]]);
                inst.sentence_label = Some(i);
                inst
            })
            .collect();
        let mut a = DataStream::new(0, insts.clone(), seed).unwrap();
        for _ in 0..at {
            a.next_instance();
        }
        let mut b = DataStream::new(0, insts, seed).unwrap();
        b.seek(at);
        prop_assert_eq!(a.next_batch(5), b.next_batch(5));
    }
}
