//! Template-driven dialogue simulator.
//!
//! A simulated user holds a goal (constraints plus information requests) and
//! talks to a rule-based wizard. User utterances are rendered as surface text
//! and delexicalised; wizard responses are rendered directly in skeletal form.

use std::collections::BTreeMap;

use crate::corpus::delex::{slot_surface_forms, tokenize, value_synonyms, EOS};
use crate::corpus::{Database, Dialogue, Goal, InformLabel, Labels, Lexicon, Ontology, Turn};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Probability that a goal slot is `dontcare`.
    pub dontcare_prob: f64,
    /// Probability that the user first asks for an unavailable value.
    pub fail_prob: f64,
    /// Probability of a closing goodbye turn.
    pub bye_prob: f64,
    /// Probability of using a synonym instead of the canonical value.
    pub synonym_prob: f64,
    pub max_turns: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            dontcare_prob: 0.15,
            fail_prob: 0.2,
            bye_prob: 0.7,
            synonym_prob: 0.15,
            max_turns: 10,
        }
    }
}

// ---------------------------------------------------------------- user side

const INFORM_FRAMES: &[&str] = &[
    "i am looking for a {desc}",
    "i want a {desc}",
    "can you find me a {desc}",
    "i need a {desc}",
    "i would like a {desc}",
    "please help me find a {desc}",
    "is there a {desc}",
    "find me a {desc} please",
    "could you recommend a {desc}",
    "i'm trying to find a {desc}",
    "we are looking for a {desc}",
    "do you know of a {desc}",
];

const NOUNS: &[&str] = &["restaurant", "place", "restaurant", "place to eat", "spot"];

const DONTCARE_CLAUSES: &[&str] = &[
    "i don't care about the {slot}",
    "any {slot} is fine",
    "the {slot} doesn't matter",
    "i have no preference for the {slot}",
    "whatever {slot} you like",
    "i don't mind about the {slot}",
    "the {slot} is not important",
    "any {slot} will do",
];

const DONTCARE_ANSWERS: &[&str] = &[
    "i don't care",
    "any {slot} is fine",
    "it doesn't matter",
    "anything is fine",
    "i don't mind",
    "no preference",
    "any will do",
    "whatever you recommend",
];

const FOOD_ANSWERS: &[&str] = &[
    "{v} food",
    "{v} food please",
    "i'd like {v} food",
    "{v}",
    "how about {v}",
    "something {v}",
    "i want {v} food",
    "{v} would be lovely",
];
const AREA_ANSWERS: &[&str] = &[
    "the {v}",
    "in the {v} please",
    "{v} part of town",
    "the {v} would be good",
    "somewhere in the {v}",
    "{v}",
    "i'd prefer the {v}",
    "how about the {v}",
];
const PRICE_ANSWERS: &[&str] = &[
    "{v}",
    "something {v}",
    "{v} please",
    "a {v} one",
    "{v} price range",
    "i want something {v}",
    "{v} would be fine",
    "let's go with {v}",
];

const RETRY_FRAMES: &[&str] = &[
    "how about {v} instead",
    "what about {v} then",
    "ok then try {v}",
    "in that case {v} please",
    "then i'll go for {v}",
    "could you try {v}",
    "fine {v} then",
    "alright what about {v}",
];

const REQUEST_FRAMES: &[&str] = &[
    "what is {obj}",
    "can i have {obj}",
    "could you give me {obj}",
    "may i have {obj}",
    "i need {obj}",
    "please tell me {obj}",
    "can you tell me {obj}",
    "and {obj}",
    "could i get {obj}",
    "i would also like {obj}",
];

fn request_objects(slot: &str) -> &'static [&'static str] {
    match slot {
        "address" => &["the address", "their address", "the address of the restaurant", "the address of it"],
        "phone" => &["the phone number", "their phone number", "the phone", "their phone"],
        "postcode" => &["the postcode", "the post code", "their postcode", "the postal code"],
        "food" => &["the type of food", "the kind of food they serve", "the food type", "the cuisine"],
        "pricerange" => &["the price range", "their price range", "the price", "the price range of it"],
        "area" => &["the area", "the part of town", "the area it is in", "their area"],
        _ => &["that"],
    }
}

const BYES: &[&str] = &[
    "thank you goodbye",
    "thanks bye",
    "that's all thank you",
    "great thanks a lot goodbye",
    "thank you very much",
    "ok bye",
    "cheers bye",
    "thank you that is all i need",
];

const PREFIXES: &[&str] = &[
    "hi", "hello", "hey there", "good evening", "good morning", "good afternoon", "um", "well", "ok",
    "so", "yes", "right", "alright", "hmm", "excuse me", "sorry", "great", "perfect", "okay then",
    "hello there", "hi again", "yeah", "sure", "uh",
];

const SUFFIXES: &[&str] = &[
    "please",
    "thanks",
    "thank you",
    "for tonight",
    "for dinner tonight",
    "for a family dinner",
    "for my birthday",
    "for a business lunch",
    "near my hotel",
    "if possible",
    "for two people",
    "for a group of friends",
    "for my parents",
    "for our anniversary",
    "this weekend",
    "tomorrow evening",
    "for lunch",
    "before the theatre",
    "after work",
    "for a date",
    "with good reviews",
    "that is popular with locals",
    "with outdoor seating",
    "that is quiet",
    "with vegetarian options",
    "that takes reservations",
    "for my colleagues",
    "with a nice view",
    "that is open late",
    "for a quick bite",
    "for a celebration",
    "with friendly staff",
    "for my wife and me",
    "for a special occasion",
    "close to the station",
    "near the river",
    "that my kids will like",
    "with parking nearby",
    "for a group of students",
    "that serves wine",
];

// Scene-setting sentences a user may open with.
const CONTEXT: &[&str] = &[
    "i am visiting cambridge for a conference",
    "my sister is coming to visit this week",
    "we just arrived by train",
    "i am new in town",
    "my friends and i are hungry after a long walk",
    "i am planning a surprise for my husband",
    "i finished a meeting early today",
    "we are celebrating a graduation",
    "my daughter has a school concert later",
    "i am staying at a hotel nearby",
    "our flight was delayed so we need a late meal",
    "i have a couple of hours free",
    "my boss asked me to book something",
    "i promised my grandmother a nice evening",
    "it is raining and we want somewhere warm",
    "we are tourists exploring the city",
    "i am hosting some visitors from abroad",
    "my team won the football match",
    "i forgot to eat lunch",
    "we have tickets for a show later",
    "my neighbour recommended asking you",
    "i need somewhere to meet an old friend",
    "i am organising a small reunion",
    "we just finished shopping",
    "my cousin is in town for the holidays",
    "i would like to treat my mother",
    "we are cycling around the colleges",
    "i am writing a guide for new students",
    "my partner has been working all week",
    "i need to impress a client",
];

// -------------------------------------------------------------- system side

const SYS_EXTRA: &[&str] = &[
    "it is very popular with students",
    "the reviews are excellent",
    "it has a cosy atmosphere",
    "it gets busy on weekends",
    "they have a lovely garden",
    "the portions are generous",
    "many visitors recommend it",
    "it is close to the market square",
    "booking ahead is advised",
    "it is known for friendly service",
    "it has won several awards",
    "the chef changes the menu every season",
    "it is a short walk from the bus stop",
    "it is great for groups",
    "it is a local favourite",
    "they also do takeaway",
    "it is quite small so it fills up quickly",
    "the desserts are famous",
    "it has live music on fridays",
    "it recently reopened after renovation",
];

const SYS_FOLLOWUP: &[&str] = &[
    "is there anything else i can help you with",
    "can i help you with anything else",
    "would you like any other information",
    "do you need anything else",
    "anything else you would like to know",
    "let me know if you need more details",
];

const SYS_REQUEST: &[&str] = &[
    "what [s.{slot}] would you like",
    "which [s.{slot}] do you prefer",
    "do you have a [s.{slot}] in mind",
    "is there a particular [s.{slot}] you would like",
    "what [s.{slot}] are you looking for",
    "could you tell me which [s.{slot}] you want",
    "sure what [s.{slot}] do you have in mind",
];

const SYS_OFFER: &[&str] = &[
    "[v.name] is a [v.pricerange] restaurant serving [v.food] food in the [v.area] of town",
    "how about [v.name] it serves [v.food] food in the [v.area]",
    "i would recommend [v.name] a [v.pricerange] [v.food] place in the [v.area] [s.area]",
    "there is a [v.pricerange] [v.food] restaurant called [v.name] in the [v.area]",
    "[v.name] serves [v.food] food and is in the [v.pricerange] [s.pricerange]",
    "[v.name] is a nice [v.food] restaurant in the [v.area] [s.area]",
    "you might like [v.name] it is [v.pricerange] and serves [v.food] food",
    "[v.name] matches your request it is a [v.food] restaurant in the [v.area]",
];

const SYS_NOMATCH: &[&str] = &[
    "i am sorry but there is no {desc}",
    "unfortunately there is no {desc}",
    "sorry i could not find a {desc}",
    "i'm afraid there is no {desc} would you like something else",
    "there is no {desc} can i help with anything else",
    "sorry there are no matches for a {desc}",
];

fn sys_answer_full(slot: &str) -> &'static [&'static str] {
    match slot {
        "address" => &[
            "the [s.address] of [v.name] is [v.address]",
            "[v.name] is located at [v.address]",
            "sure [v.name] is at [v.address]",
            "you can find [v.name] at [v.address]",
            "[v.name] is on [v.address]",
            "the [s.address] is [v.address]",
        ],
        "phone" => &[
            "the [s.phone] of [v.name] is [v.phone]",
            "you can reach [v.name] on [v.phone]",
            "sure the [s.phone] is [v.phone]",
            "[v.name] can be called on [v.phone]",
            "their [s.phone] is [v.phone]",
            "the number for [v.name] is [v.phone]",
        ],
        "postcode" => &[
            "the [s.postcode] of [v.name] is [v.postcode]",
            "[v.name] is in [s.postcode] [v.postcode]",
            "sure their [s.postcode] is [v.postcode]",
            "the [s.postcode] is [v.postcode]",
            "[v.name] has the [s.postcode] [v.postcode]",
            "it is [v.postcode] for [v.name]",
        ],
        "food" => &[
            "[v.name] serves [v.food] food",
            "they serve [v.food] food",
            "it is a [v.food] restaurant",
            "[v.name] is a [v.food] place",
            "the food at [v.name] is [v.food]",
            "sure [v.name] serves [v.food] dishes",
        ],
        "pricerange" => &[
            "[v.name] is in the [v.pricerange] [s.pricerange]",
            "it is [v.pricerange]",
            "[v.name] is [v.pricerange]",
            "the prices at [v.name] are [v.pricerange]",
            "sure it is in the [v.pricerange] [s.pricerange]",
            "[v.name] is a [v.pricerange] restaurant",
        ],
        "area" => &[
            "[v.name] is in the [v.area] of town",
            "it is in the [v.area]",
            "[v.name] is located in the [v.area] [s.area]",
            "sure it is in the [v.area]",
            "you will find it in the [v.area]",
            "[v.name] is in the [v.area]",
        ],
        _ => &["[v.name]"],
    }
}

fn sys_answer_tail(slot: &str) -> &'static str {
    match slot {
        "address" => "and the [s.address] is [v.address]",
        "phone" => "and the [s.phone] is [v.phone]",
        "postcode" => "and the [s.postcode] is [v.postcode]",
        "food" => "and it serves [v.food] food",
        "pricerange" => "and it is [v.pricerange]",
        "area" => "and it is in the [v.area]",
        _ => "",
    }
}

const SYS_BYE: &[&str] = &[
    "thank you for using our system goodbye",
    "you are welcome goodbye",
    "enjoy your meal bye",
    "have a nice day goodbye",
    "glad i could help goodbye",
    "thank you good bye",
];

// -------------------------------------------------------------- simulation

#[derive(Debug, Clone, PartialEq)]
enum SysAct {
    Request(String),
    Offer,
    NoMatch,
    Answer(Vec<String>),
    Bye,
}

struct Sim<'a> {
    ontology: &'a Ontology,
    db: &'a Database,
    cfg: &'a GeneratorConfig,
    goal: BTreeMap<String, InformLabel>,
    /// Value the user states first for one slot, known to match nothing.
    fail: Option<(String, String)>,
    labels: Labels,
    pointer: Option<usize>,
    pending: Vec<String>,
}

impl<'a> Sim<'a> {
    fn preference(&self, slot: &str) -> InformLabel {
        match &self.fail {
            Some((s, v)) if s == slot => InformLabel::Value(v.clone()),
            _ => self.goal[slot].clone(),
        }
    }

    fn matches(&self) -> Vec<usize> {
        let constraints = self.labels.constraints(self.ontology);
        self.db
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                constraints
                    .iter()
                    .all(|(s, v)| v.as_deref().is_none_or(|v| e.get(s) == Some(v)))
            })
            .map(|(i, _)| i)
            .collect()
    }
}

fn surface_value(slot: &str, value: &str, cfg: &GeneratorConfig, rng: &mut Rng) -> String {
    let syn = value_synonyms(value);
    if !syn.is_empty() && rng.chance(cfg.synonym_prob) && slot != "food" {
        rng.pick(syn).to_string()
    } else {
        value.to_string()
    }
}

fn slot_name(slot: &str, rng: &mut Rng) -> String {
    rng.pick(slot_surface_forms(slot)).to_string()
}

/// Noun phrase describing a restaurant with the given concrete values.
fn describe(values: &BTreeMap<String, String>, cfg: &GeneratorConfig, rng: &mut Rng) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(p) = values.get("pricerange") {
        parts.push(surface_value("pricerange", p, cfg, rng));
    }
    let food = values.get("food");
    let food_first = rng.chance(0.6);
    if let (Some(f), true) = (food, food_first) {
        parts.push(f.clone());
    }
    parts.push(rng.pick(NOUNS).to_string());
    if let Some(a) = values.get("area") {
        let a = surface_value("area", a, cfg, rng);
        let phrase = match rng.below(4) {
            0 => format!("in the {a}"),
            1 => format!("in the {a} part of town"),
            2 => format!("on the {a} side of town"),
            _ => format!("in the {a} area"),
        };
        parts.push(phrase);
    }
    if let (Some(f), false) = (food, food_first) {
        parts.push(format!("serving {f} food"));
    }
    parts.join(" ")
}

fn decorate(core: String, rng: &mut Rng) -> String {
    let mut s = core;
    if rng.chance(0.35) {
        s = format!("{} {s}", rng.pick(PREFIXES));
    }
    if rng.chance(0.35) {
        s = format!("{s} {}", rng.pick(SUFFIXES));
    }
    s
}

fn fill(template: &str, key: &str, value: &str) -> String {
    template.replace(&format!("{{{key}}}"), value)
}

fn sys_tokens(text: &str) -> Vec<String> {
    let mut t: Vec<String> = text.split_whitespace().map(String::from).collect();
    t.push(EOS.to_string());
    t
}

/// Generate `n_dialogues` simulated dialogues. Deterministic given `rng`.
pub fn generate_corpus(
    ontology: &Ontology,
    database: &Database,
    n_dialogues: usize,
    cfg: &GeneratorConfig,
    rng: &mut Rng,
) -> Result<Vec<Dialogue>> {
    if n_dialogues < 1 {
        return Err(Error::Config("nDialogues must be at least 1".into()));
    }
    ontology.validate()?;
    database.validate(ontology)?;
    let lexicon = Lexicon::new(ontology, database);
    (0..n_dialogues)
        .map(|i| generate_dialogue(ontology, database, &lexicon, cfg, rng, format!("d{i:04}")))
        .collect()
}

fn sample_goal(ontology: &Ontology, db: &Database, cfg: &GeneratorConfig, rng: &mut Rng) -> Goal {
    loop {
        let mut constraints = BTreeMap::new();
        for (slot, values) in &ontology.informable.0 {
            let label = if rng.chance(cfg.dontcare_prob) {
                InformLabel::DontCare
            } else {
                InformLabel::Value(rng.pick(values).clone())
            };
            constraints.insert(slot.clone(), label);
        }
        let goal = Goal {
            constraints,
            requests: Vec::new(),
        };
        if db.entities.iter().any(|e| goal.satisfied_by(e)) {
            let n_req = match rng.below(10) {
                0 => 0,
                1..=5 => 1,
                6..=8 => 2,
                _ => 3,
            };
            let mut pool: Vec<String> = ontology.requestable.clone();
            // Contact details are asked for more often than informable slots.
            pool.extend(["address", "phone", "postcode"].iter().map(|s| s.to_string()));
            let mut requests = Vec::new();
            while requests.len() < n_req {
                let r = rng.pick(&pool).clone();
                if !requests.contains(&r) {
                    requests.push(r);
                }
            }
            return Goal { requests, ..goal };
        }
    }
}

fn generate_dialogue(
    ontology: &Ontology,
    db: &Database,
    lexicon: &Lexicon,
    cfg: &GeneratorConfig,
    rng: &mut Rng,
    id: String,
) -> Result<Dialogue> {
    let goal = sample_goal(ontology, db, cfg, rng);
    let slots: Vec<String> = ontology.informable_slots().map(String::from).collect();

    let mut fail = None;
    if rng.chance(cfg.fail_prob) {
        let concrete: Vec<&String> = slots
            .iter()
            .filter(|s| matches!(goal.constraints[*s], InformLabel::Value(_)))
            .collect();
        if !concrete.is_empty() {
            let slot = (*rng.pick(&concrete)).clone();
            let mut alternatives: Vec<String> = ontology.values(&slot).unwrap().to_vec();
            rng.shuffle(&mut alternatives);
            for alt in alternatives {
                if Some(alt.as_str()) == goal.constraints[&slot].value() {
                    continue;
                }
                let mut trial = goal.clone();
                trial.constraints.insert(slot.clone(), InformLabel::Value(alt.clone()));
                if !db.entities.iter().any(|e| trial.satisfied_by(e)) {
                    fail = Some((slot.clone(), alt));
                    break;
                }
            }
        }
    }

    let mut sim = Sim {
        ontology,
        db,
        cfg,
        goal: goal.constraints.clone(),
        fail,
        labels: Labels::empty(ontology),
        pointer: None,
        pending: goal.requests.clone(),
    };

    let mut turns = Vec::new();
    let mut last_act: Option<SysAct> = None;
    while turns.len() < cfg.max_turns {
        // ---- user turn
        for v in sim.labels.requestable.values_mut() {
            *v = 0;
        }
        let mut user_bye = false;
        let mut requested: Vec<String> = Vec::new();
        let text = match &last_act {
            None => user_opening(&mut sim, &slots, rng),
            Some(SysAct::Request(slot)) => user_answer(&mut sim, slot, &slots, rng),
            Some(SysAct::NoMatch) => {
                let (slot, _) = sim.fail.take().expect("no-match only follows a failing value");
                let v = sim.goal[&slot].clone();
                sim.labels.informable.insert(slot.clone(), v.clone());
                let value = surface_value(&slot, v.value().unwrap(), cfg, rng);
                decorate(fill(rng.pick(RETRY_FRAMES), "v", &value), rng)
            }
            Some(SysAct::Offer) | Some(SysAct::Answer(_)) => {
                if sim.pending.is_empty() {
                    user_bye = true;
                    if !rng.chance(cfg.bye_prob) {
                        break;
                    }
                    rng.pick(BYES).to_string()
                } else {
                    let k = if sim.pending.len() > 1 && rng.chance(0.4) { 2 } else { 1 };
                    requested = sim.pending.drain(..k).collect();
                    user_request(&requested, rng)
                }
            }
            Some(SysAct::Bye) => break,
        };
        for r in &requested {
            sim.labels.requestable.insert(r.clone(), 1);
        }

        // ---- wizard turn
        let matches = sim.matches();
        let act = if user_bye {
            SysAct::Bye
        } else if !requested.is_empty() && sim.pointer.is_some() {
            SysAct::Answer(requested.clone())
        } else if matches.is_empty() {
            SysAct::NoMatch
        } else if matches.len() > 1
            && slots
                .iter()
                .any(|s| sim.labels.informable[s] == InformLabel::NotMentioned)
        {
            let slot = slots
                .iter()
                .find(|s| sim.labels.informable[*s] == InformLabel::NotMentioned)
                .unwrap()
                .clone();
            SysAct::Request(slot)
        } else {
            if !sim.pointer.is_some_and(|p| matches.contains(&p)) {
                sim.pointer = Some(*rng.pick(&matches));
            }
            SysAct::Offer
        };
        let sys = render_sys(&act, &sim, rng);

        let user_surface = tokenize(&text);
        turns.push(Turn {
            user: lexicon.delexicalise(&user_surface),
            user_surface,
            sys: sys_tokens(&sys),
            labels: sim.labels.clone(),
            db_match: matches.len(),
        });
        if act == SysAct::Bye {
            break;
        }
        last_act = Some(act);
    }
    Ok(Dialogue { id, goal, turns })
}

fn user_opening(sim: &mut Sim, slots: &[String], rng: &mut Rng) -> String {
    let concrete: Vec<String> = slots
        .iter()
        .filter(|s| matches!(sim.goal[*s], InformLabel::Value(_)))
        .cloned()
        .collect();
    let mut chosen = concrete.clone();
    rng.shuffle(&mut chosen);
    if !chosen.is_empty() {
        let k = 1 + rng.below(chosen.len());
        chosen.truncate(k);
    }
    let mut values = BTreeMap::new();
    for s in &chosen {
        let pref = sim.preference(s);
        sim.labels.informable.insert(s.clone(), pref.clone());
        values.insert(s.clone(), pref.value().unwrap().to_string());
    }
    let mut text = fill(rng.pick(INFORM_FRAMES), "desc", &describe(&values, sim.cfg, rng));
    for s in slots {
        if sim.goal[s] == InformLabel::DontCare && rng.chance(0.3) {
            sim.labels.informable.insert(s.clone(), InformLabel::DontCare);
            let clause = fill(rng.pick(DONTCARE_CLAUSES), "slot", &slot_name(s, rng));
            text = format!("{text} and {clause}");
        }
    }
    let mut text = decorate(text, rng);
    if rng.chance(0.3) {
        text = format!("{} {text}", rng.pick(CONTEXT));
    }
    text
}

fn user_answer(sim: &mut Sim, slot: &str, slots: &[String], rng: &mut Rng) -> String {
    let mut text = answer_phrase(sim, slot, rng);
    // Occasionally volunteer another unmentioned constraint.
    if rng.chance(0.3) {
        if let Some(other) = slots
            .iter()
            .find(|s| *s != slot && sim.labels.informable[*s] == InformLabel::NotMentioned)
            .cloned()
        {
            let extra = if sim.preference(&other) == InformLabel::DontCare {
                sim.labels.informable.insert(other.clone(), InformLabel::DontCare);
                fill(rng.pick(DONTCARE_CLAUSES), "slot", &slot_name(&other, rng))
            } else {
                answer_phrase(sim, &other, rng)
            };
            text = format!("{text} and {extra}");
        }
    }
    decorate(text, rng)
}

fn answer_phrase(sim: &mut Sim, slot: &str, rng: &mut Rng) -> String {
    let pref = sim.preference(slot);
    sim.labels.informable.insert(slot.to_string(), pref.clone());
    match pref {
        InformLabel::Value(v) => {
            let v = surface_value(slot, &v, sim.cfg, rng);
            let frames = match slot {
                "food" => FOOD_ANSWERS,
                "area" => AREA_ANSWERS,
                _ => PRICE_ANSWERS,
            };
            fill(rng.pick(frames), "v", &v)
        }
        _ => fill(rng.pick(DONTCARE_ANSWERS), "slot", &slot_name(slot, rng)),
    }
}

fn user_request(requested: &[String], rng: &mut Rng) -> String {
    let objects: Vec<&str> = requested.iter().map(|r| *rng.pick(request_objects(r))).collect();
    let obj = objects.join(" and ");
    decorate(fill(rng.pick(REQUEST_FRAMES), "obj", &obj), rng)
}

fn render_sys(act: &SysAct, sim: &Sim, rng: &mut Rng) -> String {
    match act {
        SysAct::Request(slot) => fill(rng.pick(SYS_REQUEST), "slot", slot),
        SysAct::Offer => {
            let mut text = rng.pick(SYS_OFFER).to_string();
            if rng.chance(0.5) {
                text = format!("{text} {}", rng.pick(SYS_EXTRA));
            }
            text
        }
        SysAct::NoMatch => {
            let mut values = BTreeMap::new();
            for (slot, label) in &sim.labels.informable {
                if label.value().is_some() {
                    values.insert(slot.clone(), format!("[v.{slot}]"));
                }
            }
            let desc = skeletal_description(&values);
            fill(rng.pick(SYS_NOMATCH), "desc", &desc)
        }
        SysAct::Answer(slots) => {
            let mut text = rng.pick(sys_answer_full(&slots[0])).to_string();
            for s in &slots[1..] {
                text = format!("{text} {}", sys_answer_tail(s));
            }
            if rng.chance(0.4) {
                text = format!("{text} {}", rng.pick(SYS_FOLLOWUP));
            }
            text
        }
        SysAct::Bye => rng.pick(SYS_BYE).to_string(),
    }
}

fn skeletal_description(values: &BTreeMap<String, String>) -> String {
    let mut parts = Vec::new();
    if let Some(p) = values.get("pricerange") {
        parts.push(p.clone());
    }
    if let Some(f) = values.get("food") {
        parts.push(f.clone());
    }
    parts.push("restaurant".to_string());
    if let Some(a) = values.get("area") {
        parts.push(format!("in the {a}"));
    }
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(seed: u64, n: usize) -> (Ontology, Database, Vec<Dialogue>) {
        let o = Ontology::restaurant();
        let db = Database::restaurant(&o, seed);
        let d = generate_corpus(&o, &db, n, &GeneratorConfig::default(), &mut Rng::new(seed)).unwrap();
        (o, db, d)
    }

    #[test]
    fn zero_dialogues_rejected() {
        let o = Ontology::restaurant();
        let db = Database::restaurant(&o, 1);
        assert!(generate_corpus(&o, &db, 0, &GeneratorConfig::default(), &mut Rng::new(1)).is_err());
    }

    #[test]
    fn template_inventory_sizes() {
        assert!(INFORM_FRAMES.len() >= 8 && REQUEST_FRAMES.len() >= 8 && BYES.len() >= 8);
        assert!(FOOD_ANSWERS.len() >= 8 && AREA_ANSWERS.len() >= 8 && PRICE_ANSWERS.len() >= 8);
        assert!(DONTCARE_ANSWERS.len() >= 8 && RETRY_FRAMES.len() >= 8);
        assert!(SYS_REQUEST.len() >= 6 && SYS_OFFER.len() >= 6 && SYS_NOMATCH.len() >= 6);
        assert!(SYS_BYE.len() >= 6 && SYS_FOLLOWUP.len() >= 6);
        for s in REQUESTABLE_FOR_TEST {
            assert!(sys_answer_full(s).len() >= 6);
        }
    }

    const REQUESTABLE_FOR_TEST: &[&str] = &["address", "phone", "postcode", "food", "pricerange", "area"];

    #[test]
    fn responses_end_with_eos() {
        let (_, _, d) = corpus(4, 50);
        for t in d.iter().flat_map(|d| &d.turns) {
            assert_eq!(t.sys.last().map(String::as_str), Some(EOS));
            assert!(t.sys.len() >= 2);
        }
    }

    #[test]
    fn failing_value_goes_through_no_match() {
        let (_, _, d) = corpus(5, 200);
        let with_fail: Vec<_> = d
            .iter()
            .filter(|d| d.turns.iter().any(|t| t.db_match == 0))
            .collect();
        assert!(!with_fail.is_empty());
        for dlg in with_fail {
            let t = dlg.turns.iter().find(|t| t.db_match == 0).unwrap();
            assert!(t.sys.iter().any(|w| w == "sorry" || w == "unfortunately" || w == "no"));
        }
    }
}
