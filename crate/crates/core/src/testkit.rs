//! Deterministic fixtures for tests, benches and examples.

use crate::crypto::{hash256, Keypair, SigScheme};
use crate::ledger::ChainState;
use crate::types::{
    Block, ChainConfig, GenesisAlloc, NodeId, OutPoint, Transaction, TxBody, TxOutput,
    WitnessSignature,
};
use crate::witness::{is_eligible_witness, witness_message};

/// Keypair number `i`, stable across runs.
pub fn keypair(scheme: SigScheme, i: u64) -> Keypair {
    let mut seed = b"cbchain/testkit/".to_vec();
    seed.extend_from_slice(&i.to_be_bytes());
    Keypair::from_seed(scheme, *hash256(&seed).as_bytes())
}

pub const FUNDING: u64 = 1_000_000;

/// `n` funded keys and a chain configuration. Every key starts with
/// [`FUNDING`] in its account and one genesis UTXO of the same amount.
pub struct Fixture {
    pub config: ChainConfig,
    pub alloc: GenesisAlloc,
    pub keys: Vec<Keypair>,
}

impl Fixture {
    pub fn new(n: usize, config: ChainConfig) -> Self {
        let keys: Vec<Keypair> = (0..n as u64)
            .map(|i| keypair(config.sig_scheme, i))
            .collect();
        let alloc = GenesisAlloc {
            accounts: keys.iter().map(|k| (k.node_id(), FUNDING)).collect(),
            utxos: keys
                .iter()
                .map(|k| TxOutput {
                    owner: k.node_id(),
                    amount: FUNDING,
                })
                .collect(),
        };
        Fixture {
            config,
            alloc,
            keys,
        }
    }

    /// Fast fixture: keyed-hash signatures and the default parameters.
    pub fn keyed(n: usize) -> Self {
        Fixture::new(
            n,
            ChainConfig {
                sig_scheme: SigScheme::KeyedHash,
                ..ChainConfig::default()
            },
        )
    }

    pub fn chain(&self) -> ChainState {
        ChainState::new(self.config.clone(), self.alloc.clone())
    }

    pub fn genesis(&self) -> Block {
        Block::genesis(&self.config, &self.alloc)
    }

    pub fn id(&self, i: usize) -> NodeId {
        self.keys[i].node_id()
    }

    pub fn transfer(&self, from: usize, to: usize, amount: u64, nonce: u64) -> Transaction {
        Transaction::signed(
            &self.keys[from],
            TxBody::Account {
                recipient: self.id(to),
                amount,
                nonce,
            },
        )
    }

    /// Outpoint of key `i`'s genesis UTXO.
    pub fn genesis_outpoint(&self, i: usize) -> OutPoint {
        OutPoint {
            tx_id: self.genesis().block_hash(),
            index: i as u32,
        }
    }

    pub fn spend(
        &self,
        from: usize,
        inputs: Vec<OutPoint>,
        outputs: Vec<(usize, u64)>,
    ) -> Transaction {
        Transaction::signed(
            &self.keys[from],
            TxBody::Utxo {
                inputs,
                outputs: outputs
                    .into_iter()
                    .map(|(to, amount)| TxOutput {
                        owner: self.id(to),
                        amount,
                    })
                    .collect(),
            },
        )
    }

    /// Indices of keys eligible to witness for `proposer`.
    pub fn eligible_for(&self, proposer: usize) -> Vec<usize> {
        let p = self.id(proposer);
        (0..self.keys.len())
            .filter(|&i| is_eligible_witness(&p, &self.id(i), &self.config).unwrap_or(false))
            .collect()
    }

    /// Signatures of the first `m` eligible witnesses over `block`.
    pub fn witness_sigs(&self, block: &Block) -> Vec<WitnessSignature> {
        let proposer = self
            .keys
            .iter()
            .position(|k| k.node_id() == *block.proposer())
            .expect("proposer is a fixture key");
        let witnesses = self.eligible_for(proposer);
        let m = self.config.witness_m as usize;
        assert!(
            witnesses.len() >= m,
            "proposer {proposer} has only {} eligible witnesses",
            witnesses.len()
        );
        let msg = witness_message(&block.witness_digest());
        witnesses[..m]
            .iter()
            .map(|&i| WitnessSignature {
                witness: self.id(i),
                signature: self.keys[i].sign(&msg),
            })
            .collect()
    }

    /// A fully witnessed block on `parent`.
    pub fn block_on(&self, parent: &Block, proposer: usize, txs: Vec<Transaction>) -> Block {
        let b = Block::new(
            parent.block_hash(),
            parent.height() + 1,
            self.id(proposer),
            txs,
        );
        let sigs = self.witness_sigs(&b);
        b.with_witness_sigs(sigs)
    }
}
