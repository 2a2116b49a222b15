/// Token ids plus, for each token, the character range it covers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub offsets: Vec<(usize, usize)>,
}

/// What batching and generation need from a tokenizer.
pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn encode(&self, text: &str) -> Encoding;
    fn decode(&self, ids: &[u32]) -> String;
    fn bos(&self) -> u32;
    fn sep(&self) -> u32;
    fn eos(&self) -> u32;
}

/// Byte-level tokenizer: one token per UTF-8 byte plus three specials.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub const BOS: u32 = 256;
    pub const SEP: u32 = 257;
    pub const EOS: u32 = 258;
    pub const VOCAB_SIZE: usize = 259;
}

impl Tokenizer for ByteTokenizer {
    fn vocab_size(&self) -> usize {
        Self::VOCAB_SIZE
    }

    fn encode(&self, text: &str) -> Encoding {
        let mut enc = Encoding {
            ids: Vec::with_capacity(text.len()),
            offsets: Vec::with_capacity(text.len()),
        };
        for (char_idx, ch) in text.chars().enumerate() {
            let mut buf = [0u8; 4];
            for b in ch.encode_utf8(&mut buf).bytes() {
                enc.ids.push(u32::from(b));
                enc.offsets.push((char_idx, char_idx + 1));
            }
        }
        enc
    }

    fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .filter(|&&id| id < 256)
            .map(|&id| id as u8)
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    fn bos(&self) -> u32 {
        Self::BOS
    }

    fn sep(&self) -> u32 {
        Self::SEP
    }

    fn eos(&self) -> u32 {
        Self::EOS
    }
}
