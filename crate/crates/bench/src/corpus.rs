//! Seeded synthetic corpus.
//!
//! Lines are drawn from a small template grammar with one family per task
//! category, so the toy models see the same prompt shapes the task suite
//! uses. The bundled `data/corpus.txt` is `generate(CORPUS_SEED, CORPUS_LINES)`.

use s2d_core::model::Rng;

pub const CORPUS_SEED: u64 = 20240601;
pub const CORPUS_LINES: usize = 3000;

const SUBJECTS: &[&str] = &[
    "the cat",
    "the dog",
    "a bird",
    "the old man",
    "my friend",
    "the girl",
    "a fox",
    "the king",
];
const VERBS: &[&str] = &["sees", "likes", "finds", "follows", "helps", "wants"];
const OBJECTS: &[&str] = &[
    "a ball",
    "the red box",
    "some bread",
    "the green hat",
    "a small boat",
    "the river",
    "an apple",
];
const PLACES: &[&str] = &[
    "in the park",
    "at home",
    "on the hill",
    "by the sea",
    "near the road",
];
const MOODS: &[&str] = &["happy", "tired", "busy", "hungry", "calm"];

/// Word-for-word toy "translation" lexicon.
const LEXICON: &[(&str, &str)] = &[
    ("the", "le"),
    ("a", "un"),
    ("an", "un"),
    ("my", "mon"),
    ("some", "du"),
    ("cat", "chat"),
    ("dog", "chien"),
    ("bird", "oiseau"),
    ("old", "vieux"),
    ("man", "homme"),
    ("friend", "ami"),
    ("girl", "fille"),
    ("fox", "renard"),
    ("king", "roi"),
    ("sees", "voit"),
    ("likes", "aime"),
    ("finds", "trouve"),
    ("follows", "suit"),
    ("helps", "aide"),
    ("wants", "veut"),
    ("ball", "balle"),
    ("red", "rouge"),
    ("box", "boite"),
    ("bread", "pain"),
    ("green", "vert"),
    ("hat", "chapeau"),
    ("small", "petit"),
    ("boat", "bateau"),
    ("river", "riviere"),
    ("apple", "pomme"),
];

const FACTS: &[(&str, &str)] = &[
    ("what color is the sky", "blue"),
    ("what color is the grass", "green"),
    ("how many legs has a cat", "four"),
    ("how many legs has a bird", "two"),
    ("where do fish live", "in the sea"),
    ("what do cows drink", "water"),
    ("when is it dark", "at night"),
];

fn pick<'a>(rng: &mut Rng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

fn sentence(rng: &mut Rng) -> String {
    format!(
        "{} {} {}",
        pick(rng, SUBJECTS),
        pick(rng, VERBS),
        pick(rng, OBJECTS)
    )
}

pub fn translate(text: &str) -> String {
    text.split(' ')
        .map(|w| {
            LEXICON
                .iter()
                .find(|(en, _)| *en == w)
                .map_or(w, |(_, fr)| fr)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One line of each family, split into (prompt, completion). The prompt ends
/// right where a model is expected to continue.
pub fn family_line(family: usize, rng: &mut Rng) -> (String, String) {
    match family % 6 {
        0 => {
            let s = sentence(rng);
            (format!("translate: {s} =>"), format!(" {}.", translate(&s)))
        }
        1 => {
            let (a, b) = (pick(rng, SUBJECTS), pick(rng, SUBJECTS));
            let (m1, m2) = (pick(rng, MOODS), pick(rng, MOODS));
            (
                format!("user: how is {a}? bot: {a} is {m1}. user: and {b}? bot:"),
                format!(" {b} is {m2}."),
            )
        }
        2 => {
            let (s, p) = (pick(rng, SUBJECTS), pick(rng, PLACES));
            (
                format!("context: {s} is {p}. question: where is {s}? answer:"),
                format!(" {p}."),
            )
        }
        3 => {
            let (a, b) = (rng.below(50), rng.below(50));
            (format!("math: {a}+{b}="), format!("{}.", a + b))
        }
        4 => {
            let (q, a) = FACTS[rng.below(FACTS.len())];
            (format!("question: {q}? answer:"), format!(" {a}."))
        }
        _ => {
            let (s1, s2) = (sentence(rng), sentence(rng));
            let p = pick(rng, PLACES);
            let subj = |s: &str| {
                *SUBJECTS
                    .iter()
                    .find(|p| s.starts_with(*p))
                    .expect("sentence starts with a subject")
            };
            (
                format!("text: {s1} {p}. {s2}. summary:"),
                format!(" {} and {}.", subj(&s1), subj(&s2)),
            )
        }
    }
}

/// `lines` newline-terminated lines: template families interleaved with
/// plain narrative sentences.
pub fn generate(seed: u64, lines: usize) -> String {
    let mut rng = Rng::new(seed);
    let mut out = String::new();
    for _ in 0..lines {
        let family = rng.below(7);
        if family == 6 {
            out.push_str(&format!(
                "{} {}.",
                sentence(&mut rng),
                pick(&mut rng, PLACES)
            ));
        } else {
            let (p, c) = family_line(family, &mut rng);
            out.push_str(&p);
            out.push_str(&c);
        }
        out.push('\n');
    }
    out
}
