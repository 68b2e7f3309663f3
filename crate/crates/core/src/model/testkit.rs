//! Toy lexical resources and tiny models shared by the model tests.

use alloc::string::String;
use alloc::vec::Vec;

use super::{common_words, Lexicon, Model, ModelConfig};
use crate::pinyin::{parse_syllables, CharPinyinDict, Syllable, SyllableInventory};
use crate::vocab::{BilingualEntry, Vocabulary};

pub(crate) struct Toy {
    pub vocab: Vocabulary,
    pub dict: CharPinyinDict,
    pub common: Vec<String>,
}

impl Toy {
    pub fn lex(&self) -> Lexicon<'_> {
        Lexicon { vocab: &self.vocab, dict: &self.dict, common: &self.common }
    }

    pub fn model(&self, cfg: ModelConfig) -> Model {
        Model::new(cfg, &self.vocab, &self.dict).unwrap()
    }
}

pub(crate) const SYLLABLES: [&str; 5] = ["bei", "jing", "huan", "ying", "ni"];

/// The bei/jing/huan/ying/ni example with two readings per word.
pub(crate) fn toy(common: usize) -> Toy {
    let inv = SyllableInventory::parse(&SYLLABLES.join("\n")).unwrap();
    let dict = CharPinyinDict::parse(
        "北\tbei\n背\tbei\n被\tbei\n京\tjing\n景\tjing\n欢\thuan\n幻\thuan\n迎\tying\n影\tying\n你\tni\n泥\tni\n",
        &inv,
    )
    .unwrap();
    let e = |p: &str, h: &str, f| BilingualEntry { pinyin: parse_syllables(p).unwrap(), hanzi: h.into(), freq: f, born: 0 };
    let vocab = Vocabulary::from_entries([
        e("bei'jing", "北京", 5),
        e("bei'jing", "背景", 3),
        e("huan'ying", "欢迎", 4),
        e("huan'ying", "幻影", 1),
        e("ni", "你", 9),
        e("ying'ni", "迎你", 2),
    ])
    .unwrap();
    let common = common_words(&vocab, common);
    Toy { vocab, dict, common }
}

pub(crate) fn tiny(seed: u64) -> ModelConfig {
    ModelConfig { layers: 1, hidden: 4, embed_dim: 5, composer_hidden: 3, filter_ratio: 0.6, common_words: 2, seed }
}

pub(crate) fn sylls(text: &str) -> Vec<Syllable> {
    parse_syllables(text).unwrap()
}
