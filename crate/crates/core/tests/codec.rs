use proptest::collection::vec;
use proptest::prelude::*;

use cbchain_core::codec::{decode_block, decode_transaction, encode_block, encode_transaction};
use cbchain_core::{
    Block, Keypair, NodeId, OutPoint, SigScheme, Transaction, TxBody, TxModel, TxOutput,
    WitnessSignature, U256,
};

fn scheme() -> impl Strategy<Value = SigScheme> {
    prop_oneof![Just(SigScheme::KeyedHash), Just(SigScheme::Ed25519)]
}

fn node() -> impl Strategy<Value = NodeId> {
    any::<[u8; 32]>().prop_map(NodeId::from_public_key)
}

fn output() -> impl Strategy<Value = TxOutput> {
    (node(), any::<u64>()).prop_map(|(owner, amount)| TxOutput { owner, amount })
}

fn outpoint() -> impl Strategy<Value = OutPoint> {
    (any::<[u8; 32]>(), any::<u32>()).prop_map(|(id, index)| OutPoint {
        tx_id: U256::from_be_bytes(id),
        index,
    })
}

fn body() -> impl Strategy<Value = TxBody> {
    prop_oneof![
        (node(), any::<u64>(), any::<u64>()).prop_map(|(recipient, amount, nonce)| {
            TxBody::Account {
                recipient,
                amount,
                nonce,
            }
        }),
        (vec(outpoint(), 0..4), vec(output(), 0..4))
            .prop_map(|(inputs, outputs)| TxBody::Utxo { inputs, outputs }),
    ]
}

fn transaction() -> impl Strategy<Value = Transaction> {
    prop_oneof![
        4 => (scheme(), any::<[u8; 32]>(), body())
            .prop_map(|(s, seed, body)| Transaction::signed(&Keypair::from_seed(s, seed), body)),
        1 => (any::<bool>(), any::<u64>(), vec(output(), 0..4)).prop_map(|(utxo, h, outs)| {
            let model = if utxo { TxModel::Utxo } else { TxModel::Account };
            Transaction::coinbase(model, h, outs)
        }),
    ]
}

fn block() -> impl Strategy<Value = Block> {
    (
        any::<[u8; 32]>(),
        any::<u64>(),
        node(),
        vec(transaction(), 0..5),
        vec((scheme(), any::<[u8; 32]>(), any::<[u8; 32]>()), 0..4),
    )
        .prop_map(|(parent, height, proposer, txs, sigs)| {
            let sigs = sigs
                .into_iter()
                .map(|(s, seed, msg)| {
                    let kp = Keypair::from_seed(s, seed);
                    WitnessSignature {
                        witness: kp.node_id(),
                        signature: kp.sign(&msg),
                    }
                })
                .collect();
            Block::new(U256::from_be_bytes(parent), height, proposer, txs).with_witness_sigs(sigs)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transaction_round_trip(tx in transaction()) {
        let bytes = encode_transaction(&tx);
        let back = decode_transaction(&bytes).unwrap();
        prop_assert_eq!(back.tx_id(), tx.tx_id());
        prop_assert_eq!(&back, &tx);
        prop_assert_eq!(encode_transaction(&back), bytes);
    }

    #[test]
    fn block_round_trip(b in block()) {
        let bytes = encode_block(&b);
        let back = decode_block(&bytes).unwrap();
        prop_assert_eq!(back.block_hash(), b.block_hash());
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(encode_block(&back), bytes);
    }

    #[test]
    fn distinct_transactions_encode_distinctly(a in transaction(), b in transaction()) {
        prop_assume!(a != b);
        prop_assert_ne!(encode_transaction(&a), encode_transaction(&b));
        prop_assert_ne!(a.tx_id(), b.tx_id());
    }

    #[test]
    fn distinct_blocks_encode_distinctly(a in block(), b in block()) {
        prop_assume!(a != b);
        prop_assert_ne!(encode_block(&a), encode_block(&b));
    }

    #[test]
    fn truncated_or_extended_input_is_rejected(b in block(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_block(&b);
        let at = cut.index(bytes.len());
        prop_assert!(decode_block(&bytes[..at]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(decode_block(&longer).is_err());
    }

    #[test]
    fn tampered_transaction_fails_verification(
        s in scheme(),
        seed in any::<[u8; 32]>(),
        body in body(),
        bump in 1u64..,
    ) {
        let tx = Transaction::signed(&Keypair::from_seed(s, seed), body.clone());
        prop_assert!(tx.verify_signature(s));
        let altered = match body {
            TxBody::Account { recipient, amount, nonce } => TxBody::Account {
                recipient,
                amount: amount.wrapping_add(bump),
                nonce,
            },
            TxBody::Utxo { inputs, mut outputs } => {
                outputs.push(TxOutput { owner: *tx.sender(), amount: bump });
                TxBody::Utxo { inputs, outputs }
            }
            TxBody::Coinbase { .. } => unreachable!(),
        };
        let forged = Transaction::from_parts(*tx.sender(), altered, tx.signature().clone());
        prop_assert!(!forged.verify_signature(s));
    }
}
