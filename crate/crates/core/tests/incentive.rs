use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cbchain_core::simnet::{run_simulation, SimConfig};
use cbchain_core::testkit::Fixture;
use cbchain_core::{
    block_score, mint_block, propose_block, ApplyOutcome, Block, MintHooks, RejectReason,
    RewardSchedule, Transaction, TxBody, TxModel, TxOutput,
};

fn proposer(f: &Fixture) -> usize {
    (0..f.keys.len())
        .find(|&p| f.eligible_for(p).len() >= f.config.witness_m as usize)
        .expect("fixture has a proposer with enough witnesses")
}

#[test]
fn before_hooks_run_in_registration_order() {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let order = Arc::new(Mutex::new(Vec::new()));
    let (o1, o2, o3) = (Arc::clone(&order), Arc::clone(&order), Arc::clone(&order));
    let hooks = MintHooks::new()
        .before_mint(move |_| o1.lock().unwrap().push("first"))
        .before_mint(move |_| o2.lock().unwrap().push("second"))
        .after_mint(move |_| o3.lock().unwrap().push("after"));
    let chain = f.chain();
    let pool = [f.transfer(1, 2, 1, 0), f.transfer(3, 4, 1, 0)];
    let req = propose_block(f.id(p), &chain, pool.iter(), 16).unwrap();
    mint_block(&req, &f.witness_sigs(&req.block), &f.config, &hooks).unwrap();
    assert_eq!(*order.lock().unwrap(), vec!["first", "second", "after"]);
}

#[test]
fn hook_registered_twice_runs_twice() {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let count = Arc::new(AtomicUsize::new(0));
    let hook = {
        let count = Arc::clone(&count);
        move |_: &mut cbchain_core::incentive::MintContext<'_>| {
            count.fetch_add(1, Ordering::SeqCst);
        }
    };
    let hooks = MintHooks::new().before_mint(hook.clone()).before_mint(hook);
    let chain = f.chain();
    let pool = [f.transfer(1, 2, 1, 0), f.transfer(3, 4, 1, 0)];
    let req = propose_block(f.id(p), &chain, pool.iter(), 16).unwrap();
    mint_block(&req, &f.witness_sigs(&req.block), &f.config, &hooks).unwrap();
    assert_eq!(count.load(Ordering::SeqCst), 2);
}

#[test]
fn reward_plugin_pays_proposer_and_each_witness() {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let schedule = RewardSchedule {
        proposer_reward: 10,
        witness_subsidy: 1,
        model: TxModel::Utxo,
    };
    let chain = f.chain();
    let pool = [f.transfer(1, 2, 1, 0), f.transfer(3, 4, 1, 0)];
    let req = propose_block(f.id(p), &chain, pool.iter(), 16).unwrap();
    let sigs = f.witness_sigs(&req.block);
    let block = mint_block(&req, &sigs, &f.config, &schedule.hooks()).unwrap();
    let coinbase = block.transactions().last().unwrap();
    let TxBody::Coinbase { outputs, .. } = coinbase.body() else {
        panic!("last transaction is the coinbase");
    };
    let mut want = vec![TxOutput {
        owner: f.id(p),
        amount: 10,
    }];
    want.extend(sigs.iter().map(|s| TxOutput {
        owner: s.witness,
        amount: 1,
    }));
    assert_eq!(*outputs, want);
    assert_eq!(block.user_tx_count(), 2);
    // Witnesses signed the proposal; the coinbase changes identity and score.
    assert_eq!(block.witness_digest(), req.digest);
    assert_ne!(block.block_hash(), req.block.block_hash());
    assert_ne!(
        block_score(&block).unwrap(),
        block_score(&req.block).unwrap()
    );
}

#[test]
fn zero_schedule_appends_nothing() {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let schedule = RewardSchedule {
        proposer_reward: 0,
        witness_subsidy: 0,
        model: TxModel::Account,
    };
    let chain = f.chain();
    let pool = [f.transfer(1, 2, 1, 0), f.transfer(3, 4, 1, 0)];
    let req = propose_block(f.id(p), &chain, pool.iter(), 16).unwrap();
    let block = mint_block(
        &req,
        &f.witness_sigs(&req.block),
        &f.config,
        &schedule.hooks(),
    )
    .unwrap();
    assert_eq!(block.block_hash(), req.block.block_hash());
    assert!(block.transactions().iter().all(|t| !t.is_coinbase()));
}

#[test]
fn coinbase_does_not_count_toward_minimum() {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let g = f.genesis();
    let coinbase = Transaction::coinbase(
        TxModel::Account,
        1,
        vec![TxOutput {
            owner: f.id(p),
            amount: 5,
        }],
    );
    let b = Block::new(
        g.block_hash(),
        1,
        f.id(p),
        vec![f.transfer(1, 2, 1, 0), coinbase],
    );
    let sigs = f.witness_sigs(&b);
    let mut chain = f.chain();
    assert_eq!(
        chain.apply_block(b.with_witness_sigs(sigs)),
        Err(RejectReason::TooFewTxs)
    );
}

fn issuance_after(model: TxModel, k: u64) -> (u128, u128, bool, bool) {
    let f = Fixture::keyed(10);
    let p = proposer(&f);
    let schedule = RewardSchedule {
        proposer_reward: 50,
        witness_subsidy: 3,
        model,
    };
    let hooks = schedule.hooks();
    let mut chain = f.chain();
    let before = chain.index().total_value();
    for h in 0..k {
        let pool = [f.transfer(1, 2, 1, h), f.transfer(3, 4, 1, h)];
        let req = propose_block(f.id(p), &chain, pool.iter(), 16).unwrap();
        let block = mint_block(&req, &f.witness_sigs(&req.block), &f.config, &hooks).unwrap();
        assert!(matches!(
            chain.apply_block(block).unwrap(),
            ApplyOutcome::Extended { .. }
        ));
        assert!(chain.conservation_holds());
    }
    let index = chain.index();
    (
        index.issued_total(),
        index.total_value() - before,
        chain.conservation_holds(),
        chain.replay_matches(),
    )
}

#[test]
fn issuance_equals_blocks_times_reward() {
    let m = u128::from(cbchain_core::ChainConfig::default().witness_m);
    for model in [TxModel::Account, TxModel::Utxo] {
        let k = 12u128;
        let (issued, grown, conserved, replay) = issuance_after(model, k as u64);
        assert_eq!(issued, k * (50 + m * 3), "{model:?}");
        assert_eq!(grown, issued, "{model:?}");
        assert!(conserved && replay, "{model:?}");
    }
}

#[test]
fn rewarded_simulation_conserves_value() {
    for model in [TxModel::Account, TxModel::Utxo] {
        let r = run_simulation(&SimConfig {
            reward: Some(RewardSchedule {
                proposer_reward: 25,
                witness_subsidy: 2,
                model,
            }),
            tx_model: model,
            check_replay: true,
            seed: 3,
            ..SimConfig::default()
        })
        .unwrap();
        assert_eq!(r.conservation_violations, 0, "{model:?}");
        assert_eq!(r.replay_mismatches, 0, "{model:?}");
        assert!(r.blocks_minted > 0);
    }
}
