//! Deterministic synthetic ad corpora: a separable 12-sector classification
//! corpus for end-to-end benchmarks and a repetitive word-pattern corpus for
//! masked-token pretraining experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawRecord;

/// Sector names of the generated corpus, in label order.
pub const CATEGORIES: [&str; 12] = [
    "Emlak",
    "Vasıta",
    "Eğitim",
    "Sağlık",
    "Turizm",
    "Gıda",
    "Giyim",
    "Elektronik",
    "Finans",
    "İnşaat",
    "Temizlik",
    "Nakliyat",
];

/// Class-specific words; no word appears under two sectors, so every text is
/// separable from its keywords alone.
const CLASS_KEYWORDS: [[&str; 6]; 12] = [
    ["daire", "kiralık", "satılık", "konut", "tapu", "metrekare"],
    ["araba", "otomobil", "galeri", "motor", "kilometre", "kaporta"],
    ["kurs", "ders", "öğretmen", "sınav", "diploma", "üniversite"],
    ["klinik", "doktor", "muayene", "tedavi", "hastane", "randevu"],
    ["otel", "tatil", "tur", "rezervasyon", "plaj", "gezi"],
    ["restoran", "yemek", "menü", "lezzet", "kahvaltı", "mutfak"],
    ["elbise", "kumaş", "moda", "beden", "ceket", "ayakkabı"],
    ["telefon", "bilgisayar", "tablet", "şarj", "ekran", "garanti"],
    ["kredi", "banka", "faiz", "sigorta", "yatırım", "borsa"],
    ["tadilat", "boya", "çatı", "mimar", "şantiye", "beton"],
    ["hijyen", "deterjan", "halı", "yıkama", "dezenfekte", "parlatma"],
    ["nakliye", "kamyonet", "asansörlü", "paketleme", "depolama", "taşımacılık"],
];

/// Sector-neutral ad vocabulary mixed into every class.
const FILLERS: [&str; 20] = [
    "hemen", "fırsat", "kampanya", "ücretsiz", "hizmet", "kaliteli", "uygun",
    "fiyat", "indirim", "güvenilir", "profesyonel", "yeni", "büyük", "özel",
    "numara", "bugün", "şimdi", "arayın", "bize", "ulaşın",
];

const PUNCTUATION: [char; 4] = ['!', '.', ',', '?'];

/// Uppercases with Turkish dotted/dotless i rules so that Turkish
/// lowercasing recovers the original word.
fn turkish_uppercase(word: &str) -> String {
    word.chars()
        .flat_map(|c| match c {
            'i' => vec!['İ'],
            'ı' => vec!['I'],
            other => other.to_uppercase().collect(),
        })
        .collect()
}

fn capitalize_first(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => turkish_uppercase(&first.to_string()) + chars.as_str(),
        None => String::new(),
    }
}

/// Applies case and punctuation noise so normalization has work to do.
fn add_noise(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = match rng.gen_range(0..10) {
        0 => turkish_uppercase(word),
        1 | 2 => capitalize_first(word),
        _ => word.to_string(),
    };
    if rng.gen_range(0..5) == 0 {
        out.push(*PUNCTUATION.choose(rng).expect("non-empty"));
    }
    out
}

/// Generates a balanced 12-sector corpus of `texts_per_class` records per
/// sector. Each text mixes two or three of its sector's keywords with shared
/// filler words, in shuffled order, with sporadic uppercase and punctuation.
/// Identical seeds give identical corpora.
pub fn labeled_corpus(texts_per_class: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(12 * texts_per_class);
    for (class, keywords) in CLASS_KEYWORDS.iter().enumerate() {
        for _ in 0..texts_per_class {
            let keyword_count = rng.gen_range(2..=3);
            let filler_count = rng.gen_range(2..=5);
            let mut words: Vec<&str> = keywords
                .choose_multiple(&mut rng, keyword_count)
                .copied()
                .collect();
            for _ in 0..filler_count {
                words.push(FILLERS.choose(&mut rng).expect("non-empty"));
            }
            words.shuffle(&mut rng);
            let text = words
                .iter()
                .map(|w| add_noise(w, &mut rng))
                .collect::<Vec<_>>()
                .join(" ");
            records.push(RawRecord {
                id: records.len().to_string(),
                category: CATEGORIES[class].to_string(),
                text,
            });
        }
    }
    records
}

/// Words of the repetitive pretraining corpus.
const PATTERN_WORDS: [&str; 12] = [
    "kedi", "köpek", "kuş", "balık", "fare", "tavşan",
    "aslan", "kaplan", "ayı", "kurt", "tilki", "geyik",
];

/// Generates `count` highly repetitive texts over a 12-word vocabulary.
/// Each text is one of a handful of fixed word cycles starting at a random
/// offset, so co-occurrence statistics are strong and a small model can
/// learn to fill masked positions quickly. Identical seeds give identical
/// corpora.
pub fn repetitive_texts(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            // Walk the word ring forward or backward from a random start.
            let start = rng.gen_range(0..PATTERN_WORDS.len());
            let forward = rng.gen_bool(0.5);
            let length = rng.gen_range(6..=10);
            (0..length)
                .map(|k| {
                    let idx = if forward {
                        (start + k) % PATTERN_WORDS.len()
                    } else {
                        (start + PATTERN_WORDS.len() - k % PATTERN_WORDS.len())
                            % PATTERN_WORDS.len()
                    };
                    PATTERN_WORDS[idx]
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
