use super::{estimate_tokens, Binding, InstantiateQuery, Instantiation, MergeQuery, Reasoner, ReasonerError, Source, Verdict};
use crate::frontend::PlaceholderKind;
use crate::lcfg::{Condition, Taken};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};
use std::sync::LazyLock;

static NULL_CHECK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?\s*(?:(\w+)\s*(==|!=)\s*null|null\s*(==|!=)\s*(\w+))\s*\)?$").unwrap());
static BOOL_CHECK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\(?\s*(?:(!?)\s*(\w+)|(\w+)\s*(==|!=)\s*(true|false)|(true|false)\s*(==|!=)\s*(\w+))\s*\)?$").unwrap()
});

/// Rejects only contradictions between literal arguments and callee branch
/// conditions; accepts everything else.
#[derive(Debug, Clone)]
pub struct MockReasoner {
    seed: u64,
}

impl MockReasoner {
    pub fn new(seed: u64) -> Self {
        MockReasoner { seed }
    }
}

fn bound<'a>(bindings: &'a [Binding], param: &str) -> Option<&'a str> {
    bindings.iter().find(|b| b.param == param).map(|b| b.arg.trim())
}

fn taken_bool(c: &Condition) -> Option<bool> {
    match c.taken {
        Taken::True => Some(true),
        Taken::False => Some(false),
        _ => None,
    }
}

/// Rule (a): the first branch is a null test on a parameter bound to `null`.
fn null_contradiction(c: &Condition, bindings: &[Binding]) -> Option<String> {
    let taken = taken_bool(c)?;
    let caps = NULL_CHECK.captures(c.text.trim())?;
    let (param, op) = match (caps.get(1), caps.get(4)) {
        (Some(p), _) => (p.as_str(), &caps[2]),
        (_, Some(p)) => (p.as_str(), &caps[3]),
        _ => return None,
    };
    if bound(bindings, param)? != "null" {
        return None;
    }
    let holds = op == "==";
    (holds != taken).then(|| format!("branch `{}` taken {taken} contradicts argument {param} = null", c.text))
}

/// Rule (b): a branch on a boolean parameter bound to a literal.
fn bool_contradiction(c: &Condition, bindings: &[Binding]) -> Option<String> {
    let taken = taken_bool(c)?;
    let caps = BOOL_CHECK.captures(c.text.trim())?;
    // Value the parameter must have for the branch to go the recorded way.
    let (param, required) = if let Some(p) = caps.get(2) {
        let negated = !caps[1].is_empty();
        (p.as_str(), taken != negated)
    } else if let Some(p) = caps.get(3) {
        let lit = &caps[5] == "true";
        (p.as_str(), if &caps[4] == "==" { lit == taken } else { lit != taken })
    } else {
        let p = caps.get(8)?;
        let lit = &caps[6] == "true";
        (p.as_str(), if &caps[7] == "==" { lit == taken } else { lit != taken })
    };
    let actual = match bound(bindings, param)? {
        "true" => true,
        "false" => false,
        _ => return None,
    };
    (actual != required).then(|| format!("branch `{}` taken {taken} needs {param} = {required} but the argument is {actual}", c.text))
}

impl Reasoner for MockReasoner {
    fn source(&self) -> Source {
        Source::Mock
    }

    fn verify_merge(&self, q: &MergeQuery<'_>) -> Result<Verdict, ReasonerError> {
        let conds = &q.callee_path.conditions;
        let reason = conds
            .first()
            .and_then(|c| null_contradiction(&c.condition, q.bindings))
            .or_else(|| conds.iter().find_map(|c| bool_contradiction(&c.condition, q.bindings)));
        let (valid, rationale) = match reason {
            Some(r) => (false, r),
            None => (true, "no literal argument contradicts the path".to_string()),
        };
        Ok(Verdict { valid, rationale, source: Source::Mock, attempts: 1, token_estimate: estimate_tokens(&q.prompt.rendered) })
    }

    fn instantiate(&self, q: &InstantiateQuery<'_>) -> Result<Instantiation, ReasonerError> {
        Ok(Instantiation {
            values: mock_values(self.seed, q.sequence_id, q.events),
            attempts: 1,
            fallback: false,
            token_estimate: estimate_tokens(q.prompt),
        })
    }
}

const TOKEN_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

fn token(rng: &mut ChaCha8Rng) -> String {
    (0..8).map(|_| TOKEN_CHARS[rng.random_range(0..TOKEN_CHARS.len())] as char).collect()
}

/// Seeded values for every placeholder of a sequence, a pure function of
/// `(seed, sequence_id, kinds)`.
pub fn mock_values(seed: u64, sequence_id: &str, events: &[(String, Vec<PlaceholderKind>)]) -> Vec<Vec<String>> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sequence_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    events
        .iter()
        .map(|(_, kinds)| {
            kinds
                .iter()
                .map(|k| match k {
                    PlaceholderKind::Identifier => format!("blk_{}", rng.random_range(1_000_000_000u64..10_000_000_000)),
                    PlaceholderKind::Address => format!(
                        "10.{}.{}.{}:{}",
                        rng.random_range(0..=255u8),
                        rng.random_range(0..=255u8),
                        rng.random_range(1..=254u8),
                        rng.random_range(1024..=65535u16)
                    ),
                    PlaceholderKind::Path => format!("/data/{}", token(&mut rng)),
                    PlaceholderKind::Numeric => rng.random_range(0..1_000_000u32).to_string(),
                    PlaceholderKind::Generic => token(&mut rng),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(text: &str, taken: Taken) -> Condition {
        Condition { text: text.into(), taken }
    }

    fn bind(p: &str, a: &str) -> Vec<Binding> {
        vec![Binding { param: p.into(), arg: a.into() }]
    }

    #[test]
    fn null_rule_both_directions() {
        let b = bind("arg", "null");
        assert_eq!(null_contradiction(&cond("arg == null", Taken::True), &b), None);
        let r = null_contradiction(&cond("arg == null", Taken::False), &b).unwrap();
        assert!(r.contains("arg = null"));
        assert!(null_contradiction(&cond("arg != null", Taken::True), &b).is_some());
        assert!(null_contradiction(&cond("null != arg", Taken::True), &b).is_some());
        assert_eq!(null_contradiction(&cond("arg != null", Taken::True), &bind("arg", "x")), None);
    }

    #[test]
    fn bool_rule_forms() {
        let t = bind("f", "true");
        assert_eq!(bool_contradiction(&cond("f", Taken::True), &t), None);
        assert!(bool_contradiction(&cond("f", Taken::False), &t).is_some());
        assert!(bool_contradiction(&cond("!f", Taken::True), &t).is_some());
        assert!(bool_contradiction(&cond("f == false", Taken::True), &t).is_some());
        assert_eq!(bool_contradiction(&cond("f != false", Taken::True), &t), None);
        assert!(bool_contradiction(&cond("true == f", Taken::False), &t).is_some());
        assert_eq!(bool_contradiction(&cond("f", Taken::False), &bind("f", "flag")), None);
        assert_eq!(bool_contradiction(&cond("f && g", Taken::False), &t), None);
    }

    #[test]
    fn seeded_values() {
        let ev = vec![("Received block <*> from <*>".to_string(), vec![PlaceholderKind::Identifier, PlaceholderKind::Address])];
        let a = mock_values(42, "s1", &ev);
        assert_eq!(a, mock_values(42, "s1", &ev));
        assert_ne!(a, mock_values(43, "s1", &ev));
        let id = &a[0][0];
        assert!(id.starts_with("blk_") && id.len() == 14 && id[4..].bytes().all(|c| c.is_ascii_digit()));
        let addr = &a[0][1];
        assert!(addr.starts_with("10.") && addr.contains(':'));
    }
}
