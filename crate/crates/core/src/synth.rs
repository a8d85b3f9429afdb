//! Seeded synthetic corpora.
//!
//! * [`separable_corpus`]: every strategy owns a distinct signature token
//!   that appears in the seeker cue and in the counselor reply, so a linear
//!   model can separate the strategies exactly.
//! * [`demo_corpus`]: multi-turn anxiety and relationship-stress chats where
//!   the seeker's last move determines the counselor's strategy. Good enough
//!   to drive the server and simulator end to end.
//! * [`random_conversations`]: transcripts of random length mixing both pools
//!   plus noise, for pipeline property checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Category, Conversation, Speaker, Strategy, Utterance};

/// The signature token of `strategy` in [`separable_corpus`].
pub fn signature(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::OpenQuestion => "kxopen",
        Strategy::ClosedQuestion => "kxclosed",
        Strategy::PersuadeWithPermission => "kxpersuade",
        Strategy::Reflection => "kxreflect",
        Strategy::Support => "kxsupport",
        Strategy::IntroductionGreeting => "kxgreet",
        Strategy::Grounding => "kxground",
        Strategy::Affirm => "kxaffirm",
    }
}

const FILLER: &[&str] = &[
    "hi there",
    "thanks for being here",
    "it has been a long week",
    "i am not sure where to start",
    "things have been a lot lately",
    "i just needed someone to talk to",
    "sorry if this is messy",
    "i have been thinking about this a lot",
];

const CUES: &[&str] = &[
    "i wanted to talk about",
    "there is something about",
    "i keep coming back to",
    "lately it is all about",
    "i cannot stop thinking about",
];

const TOPICS: &[&str] = &[
    "school", "work", "my family", "my partner", "money", "sleep", "my friends", "the future",
];

fn reply_templates(strategy: Strategy) -> &'static [&'static str] {
    match strategy {
        Strategy::OpenQuestion => &[
            "what has been on your mind about {t}",
            "how do you feel when you think about {t}",
            "what would you like to change about {t}",
            "can you tell me more about {t}",
            "what does a normal day look like with {t}",
            "how has {t} been affecting you",
        ],
        Strategy::ClosedQuestion => &[
            "is {t} the main thing right now",
            "did this start recently with {t}",
            "have you talked to anyone about {t}",
            "are you safe right now with {t}",
            "do you want to focus on {t} today",
            "was {t} hard this week",
        ],
        Strategy::PersuadeWithPermission => &[
            "would it be okay if i shared an idea about {t}",
            "could we try a small step together with {t}",
            "may i suggest writing down your thoughts about {t}",
            "would you be open to a breathing exercise before we discuss {t}",
            "if you are willing we could plan one thing for {t}",
            "is it alright if i offer a thought on {t}",
        ],
        Strategy::Reflection => &[
            "it sounds like {t} has been weighing on you",
            "so you feel stuck when it comes to {t}",
            "you seem really tired of dealing with {t}",
            "it seems {t} leaves you feeling alone",
            "what i hear is that {t} matters a lot to you",
            "sounds like {t} is taking up a lot of space",
        ],
        Strategy::Support => &[
            "i am so sorry you are going through this with {t}",
            "that sounds really hard and i am here for you with {t}",
            "it makes sense to feel this way about {t}",
            "you are not alone in this with {t}",
            "i understand how painful {t} can be",
            "i am glad you reached out about {t}",
        ],
        Strategy::IntroductionGreeting => &[
            "hi and welcome, i am here to listen about {t}",
            "hello, nice to meet you, we can talk about {t}",
            "hey there, thanks for coming in to talk about {t}",
            "welcome, my name is sam and i am happy to chat about {t}",
            "hi, i am glad you are here to talk about {t}",
            "hello friend, take your time telling me about {t}",
        ],
        Strategy::Grounding => &[
            "okay i see, {t}",
            "mhm i hear you about {t}",
            "right, {t}",
            "got it, {t}",
            "i see what you mean about {t}",
            "okay, thanks for sharing about {t}",
        ],
        Strategy::Affirm => &[
            "you have been really brave facing {t}",
            "that took a lot of strength with {t}",
            "you are handling {t} so thoughtfully",
            "it is great that you took that step with {t}",
            "you clearly care a lot, and that shows with {t}",
            "you should be proud of how you handled {t}",
        ],
    }
}

fn fill(template: &str, topic: &str) -> String {
    template.replace("{t}", topic)
}

/// `per_strategy` two-to-four utterance chats for each strategy. Every chat
/// ends with one counselor reply labeled with exactly that strategy; the
/// preceding seeker cue and the reply both carry its [`signature`].
pub fn separable_corpus(per_strategy: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_strategy * Strategy::COUNT);
    for k in 0..per_strategy {
        for s in Strategy::ALL {
            let category = if rng.random_bool(0.5) {
                Category::Anxiety
            } else {
                Category::RelationshipStress
            };
            let mut conv = Conversation::new(format!("sep-{}-{k}", s.as_str()), category);
            conv.rating = Some(5);
            for _ in 0..rng.random_range(0..=2) {
                conv.push(Speaker::Seeker, *FILLER.choose(&mut rng).unwrap());
            }
            let topic = *TOPICS.choose(&mut rng).unwrap();
            let cue = CUES.choose(&mut rng).unwrap();
            conv.push(Speaker::Seeker, format!("{cue} {topic} {}", signature(s)));
            let template = reply_templates(s).choose(&mut rng).unwrap();
            let index = conv.utterances.len();
            conv.utterances.push(
                Utterance::new(index, Speaker::Counselor, format!("{} {}", fill(template, topic), signature(s)))
                    .with_strategies([s]),
            );
            out.push(conv);
        }
    }
    out
}

const NAMES: &[&str] = &["alex", "jordan", "sam", "riley", "casey", "morgan"];

const ANXIETY_TOPICS: &[&str] = &[
    "my exam", "school", "my grades", "work", "my friends", "making friends", "my future", "sleep",
];
const RELATIONSHIP_TOPICS: &[&str] = &[
    "my boyfriend", "my girlfriend", "my partner", "the long distance", "money", "our bills",
    "my relationship", "moving away",
];

const GREETINGS: &[&str] = &["hi", "hello", "hey there", "hi, is anyone there?", "hello, i need to talk"];

const FEELINGS: &[&str] = &[
    "anxious", "worried", "stressed", "overwhelmed", "lonely", "sad", "scared", "hopeless", "frustrated",
];

/// Seeker move templates paired with the counselor strategies that answer
/// them.
const MOVES: &[(&[&str], &[Strategy])] = &[
    (
        &[
            "i feel so {f} about {t}",
            "i have been really {f} because of {t}",
            "{t} makes me feel {f} all the time",
            "honestly i am just {f} about {t}",
        ],
        &[Strategy::Reflection, Strategy::Support],
    ),
    (
        &["yes", "no, not really", "i guess so", "maybe", "kind of", "not sure"],
        &[Strategy::OpenQuestion],
    ),
    (
        &[
            "it started a few weeks ago with {t}",
            "last night we argued about {t}",
            "{t} has been going on for months",
            "my mom keeps asking about {t}",
        ],
        &[Strategy::Grounding, Strategy::ClosedQuestion],
    ),
    (
        &[
            "what should i do about {t}?",
            "i don't know what to do about {t}",
            "do you have any advice on {t}?",
            "how do i deal with {t}?",
        ],
        &[Strategy::PersuadeWithPermission],
    ),
    (
        &[
            "i finally talked to someone about {t}",
            "i managed to make a plan for {t}",
            "i tried going for a walk to handle {t}",
            "today i actually worked on {t}",
        ],
        &[Strategy::Affirm],
    ),
];

fn demo_reply(strategy: Strategy, topic: &str, feeling: &str, rng: &mut ChaCha8Rng) -> String {
    let pool: &[&str] = match strategy {
        Strategy::OpenQuestion => &[
            "what do you think is behind that?",
            "how has {t} been for you lately?",
            "what would help you most right now?",
            "can you tell me more about {t}?",
        ],
        Strategy::ClosedQuestion => &[
            "is this the first time {t} has felt like this?",
            "did something specific happen with {t}?",
            "have you talked to anyone else about {t}?",
        ],
        Strategy::PersuadeWithPermission => &[
            "would it be okay if i suggested writing down what worries you about {t}?",
            "could we try breaking {t} into smaller steps together?",
            "if you are open to it, maybe a short walk could help with {t}?",
        ],
        Strategy::Reflection => &[
            "it sounds like {t} is leaving you feeling {f}.",
            "so you feel {f} whenever {t} comes up.",
            "you seem really {f} about {t}.",
        ],
        Strategy::Support => &[
            "i am so sorry you are going through this, feeling {f} is really hard.",
            "that sounds really tough, i am here for you.",
            "it makes total sense to feel {f} about {t}.",
        ],
        Strategy::IntroductionGreeting => &[
            "hi there, welcome! my name is {n}. what brings you here today?",
            "hello and welcome, i am {n}. how are you doing today?",
        ],
        Strategy::Grounding => &["okay, i see.", "mhm, i hear you.", "got it, thanks for sharing that.", "right, that makes sense."],
        Strategy::Affirm => &[
            "that took a lot of courage, well done.",
            "you should be proud of yourself for that.",
            "that is a really great step with {t}.",
        ],
    };
    let name = NAMES.choose(rng).unwrap();
    pool.choose(rng)
        .unwrap()
        .replace("{t}", topic)
        .replace("{f}", feeling)
        .replace("{n}", name)
}

/// Multi-turn practice chats, all rated 5, with labeled counselor turns.
pub fn demo_corpus(conversations: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..conversations).map(|k| demo_conversation(k, &mut rng)).collect()
}

fn demo_conversation(k: usize, rng: &mut ChaCha8Rng) -> Conversation {
    let anxiety = rng.random_bool(0.5);
    let (category, topics) = if anxiety {
        (Category::Anxiety, ANXIETY_TOPICS)
    } else {
        (Category::RelationshipStress, RELATIONSHIP_TOPICS)
    };
    let mut conv = Conversation::new(format!("demo-{k}"), category);
    conv.rating = Some(5);
    let topic = *topics.choose(rng).unwrap();

    conv.push(Speaker::Seeker, *GREETINGS.choose(rng).unwrap());
    let greet = demo_reply(Strategy::IntroductionGreeting, topic, "", rng);
    push_labeled(&mut conv, greet, &[Strategy::IntroductionGreeting]);

    for _ in 0..rng.random_range(2..=5) {
        let (templates, answers) = MOVES.choose(rng).unwrap();
        let feeling = *FEELINGS.choose(rng).unwrap();
        let seeker = templates.choose(rng).unwrap().replace("{t}", topic).replace("{f}", feeling);
        conv.push(Speaker::Seeker, seeker);
        let primary = *answers.choose(rng).unwrap();
        let mut labels = alloc::vec![primary];
        let mut reply = demo_reply(primary, topic, feeling, rng);
        // Occasionally a two-strategy reply, e.g. support followed by a question.
        if rng.random_bool(0.2) && primary != Strategy::OpenQuestion {
            labels.push(Strategy::OpenQuestion);
            reply = format!("{reply} {}", demo_reply(Strategy::OpenQuestion, topic, feeling, rng));
        }
        push_labeled(&mut conv, reply, &labels);
    }
    conv
}

fn push_labeled(conv: &mut Conversation, text: String, labels: &[Strategy]) {
    let index = conv.utterances.len();
    conv.utterances
        .push(Utterance::new(index, Speaker::Counselor, text).with_strategies(labels.iter().copied()));
}

const NOISE: &[&str] = &["ok", "lol", "hmm", "...", "brb", "thanks", "idk", "sure"];

/// Unlabeled transcripts of length `0..=max_len` with random speakers,
/// drawing text from the demo and separable pools plus short noise.
pub fn random_conversations(count: usize, max_len: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let mut conv = Conversation::new(format!("rand-{k}"), Category::Other(String::from("mixed")));
            let len = rng.random_range(0..=max_len);
            for _ in 0..len {
                let speaker = if rng.random_bool(0.55) { Speaker::Seeker } else { Speaker::Counselor };
                let topic = *TOPICS.choose(&mut rng).unwrap();
                let text = match rng.random_range(0..4) {
                    0 => {
                        let (templates, _) = MOVES.choose(&mut rng).unwrap();
                        templates
                            .choose(&mut rng)
                            .unwrap()
                            .replace("{t}", topic)
                            .replace("{f}", FEELINGS.choose(&mut rng).unwrap())
                    }
                    1 => {
                        let s = *Strategy::ALL.choose(&mut rng).unwrap();
                        format!("{} {topic} {}", CUES.choose(&mut rng).unwrap(), signature(s))
                    }
                    2 => String::from(*FILLER.choose(&mut rng).unwrap()),
                    _ => String::from(*NOISE.choose(&mut rng).unwrap()),
                };
                conv.push(speaker, text);
            }
            conv
        })
        .collect()
}
