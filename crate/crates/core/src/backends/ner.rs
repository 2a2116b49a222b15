use super::NerBackend;
use crate::corpus::EntitySpan;
use crate::text;
use crate::Result;

/// Rule-based tagger used as a deterministic stand-in for a neural NER model.
///
/// * `$` followed by digits: `MONEY`
/// * bare integers: `CARDINAL`
/// * maximal runs of capitalised words: `PERSON`. A sentence-initial word
///   only counts when the run continues past it, and capitalised function
///   words (`The`, `I`, `He`, ...) never join a run.
#[derive(Debug, Clone, Default)]
pub struct HeuristicNer;

impl HeuristicNer {
    pub fn new() -> Self {
        Self
    }
}

struct Word<'a> {
    /// Character offsets of the token core (punctuation stripped).
    start: usize,
    end: usize,
    core: &'a str,
    sentence_initial: bool,
    /// Punctuation after the core closes any running name.
    closes_run: bool,
}

fn is_money(core: &str) -> bool {
    let Some(rest) = core.strip_prefix('$') else {
        return false;
    };
    let mut chars = rest.chars().peekable();
    if !chars.peek().is_some_and(|c| c.is_ascii_digit()) {
        return false;
    }
    rest.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
        && rest.chars().last().is_some_and(|c| c.is_ascii_digit())
}

fn is_cardinal(core: &str) -> bool {
    !core.is_empty()
        && core.chars().next().is_some_and(|c| c.is_ascii_digit())
        && core.chars().last().is_some_and(|c| c.is_ascii_digit())
        && core.chars().all(|c| c.is_ascii_digit() || c == ',')
}

fn is_capitalized(core: &str) -> bool {
    core.chars().next().is_some_and(|c| c.is_uppercase()) && !text::is_stopword(&core.to_lowercase())
}

fn split_words(text: &str) -> Vec<Word<'_>> {
    let mut words = Vec::new();
    let mut prev_ends_sentence = true;
    for (start, end, tok) in text::tokens_with_char_offsets(text) {
        let keep_lead = |c: char| c.is_alphanumeric() || c == '$';
        let lead = tok.chars().take_while(|&c| !keep_lead(c)).count();
        let trail = tok.chars().rev().take_while(|c| !c.is_alphanumeric()).count();
        let n = end - start;
        let sentence_initial = prev_ends_sentence;
        prev_ends_sentence = tok.ends_with(['.', '!', '?']) || tok.ends_with(".\"") || tok.ends_with("!\"");
        if lead + trail >= n {
            continue;
        }
        let core = text::char_slice(tok, lead, n - trail).unwrap_or_default();
        words.push(Word {
            start: start + lead,
            end: end - trail,
            core,
            sentence_initial,
            closes_run: trail > 0,
        });
    }
    words
}

impl NerBackend for HeuristicNer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let words = split_words(text);
        let mut spans = Vec::new();
        let mut run: Vec<&Word<'_>> = Vec::new();

        let flush = |run: &mut Vec<&Word<'_>>, spans: &mut Vec<EntitySpan>| {
            let keep = run.len() > 1 || run.first().is_some_and(|w| !w.sentence_initial);
            if keep {
                let (s, e) = (run[0].start, run[run.len() - 1].end);
                let covered = text::char_slice(text, s, e).unwrap_or_default();
                spans.push(EntitySpan::new(s, e, "PERSON", covered));
            }
            run.clear();
        };

        for w in &words {
            if is_money(w.core) {
                flush(&mut run, &mut spans);
                spans.push(EntitySpan::new(w.start, w.end, "MONEY", w.core));
            } else if is_cardinal(w.core) {
                flush(&mut run, &mut spans);
                spans.push(EntitySpan::new(w.start, w.end, "CARDINAL", w.core));
            } else if is_capitalized(w.core) {
                // A sentence boundary starts a fresh run.
                if w.sentence_initial {
                    flush(&mut run, &mut spans);
                }
                run.push(w);
                if w.closes_run {
                    flush(&mut run, &mut spans);
                }
            } else {
                flush(&mut run, &mut spans);
            }
        }
        flush(&mut run, &mut spans);
        spans.sort_by_key(|s| s.start);
        Ok(spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(text: &str) -> Vec<(String, String)> {
        HeuristicNer
            .tag(text)
            .unwrap()
            .into_iter()
            .map(|s| (s.text, s.label))
            .collect()
    }

    fn pair(t: &str, l: &str) -> (String, String) {
        (t.to_owned(), l.to_owned())
    }

    #[test]
    fn empty_text() {
        assert!(tags("").is_empty());
    }

    #[test]
    fn money_only() {
        assert_eq!(tags("he gave me $30 today"), vec![pair("$30", "MONEY")]);
    }

    #[test]
    fn name_at_sentence_start() {
        assert_eq!(tags("Gregory Helms came over"), vec![pair("Gregory Helms", "PERSON")]);
    }

    #[test]
    fn helms_summary() {
        assert_eq!(
            tags("Pro Wrestler Gregory Helms stole $30 from 8 year old me"),
            vec![
                pair("Pro Wrestler Gregory Helms", "PERSON"),
                pair("$30", "MONEY"),
                pair("8", "CARDINAL"),
            ]
        );
    }

    #[test]
    fn lone_sentence_initial_word_skipped() {
        assert!(tags("Yesterday it rained").is_empty());
        assert_eq!(tags("We met Alice, then left."), vec![pair("Alice", "PERSON")]);
    }

    #[test]
    fn function_words_break_runs() {
        assert_eq!(tags("so I told The Times"), vec![pair("Times", "PERSON")]);
    }

    #[test]
    fn spans_match_offsets() {
        let text = "At noon, \"Bob Stone\" paid $1,200.50 to 3 friends.";
        for s in HeuristicNer.tag(text).unwrap() {
            assert_eq!(text::char_slice(text, s.start, s.end).unwrap(), s.text);
        }
        assert_eq!(
            tags(text),
            vec![pair("Bob Stone", "PERSON"), pair("$1,200.50", "MONEY"), pair("3", "CARDINAL")]
        );
    }
}
