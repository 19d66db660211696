use serde::{Deserialize, Serialize};

/// Size of the hashing tokenizer's vocabulary.
pub const VOCAB_SIZE: usize = 1024;

/// Instruction text as token ids in `[0, VOCAB_SIZE)`. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionTokens {
    ids: Vec<u16>,
}

impl InstructionTokens {
    pub fn from_ids(ids: Vec<u16>) -> Option<Self> {
        ids.iter()
            .all(|&id| (id as usize) < VOCAB_SIZE)
            .then_some(Self { ids })
    }

    pub fn ids(&self) -> &[u16] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Whitespace-split words, each hashed with FNV-1a into the vocabulary.
pub fn tokenize_text(s: &str) -> InstructionTokens {
    let ids = s
        .split_whitespace()
        .map(|w| (fnv1a(w.as_bytes()) % VOCAB_SIZE as u64) as u16)
        .collect();
    InstructionTokens { ids }
}
