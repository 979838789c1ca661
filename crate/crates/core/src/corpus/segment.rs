use super::Sentence;

/// Splits raw text into index-ordered sentences.
pub trait Segmenter {
    fn segment(&self, raw: &str) -> Vec<Sentence>;
}

/// Terminator-based splitter.
///
/// A boundary falls after `.`, `!` or `?` (plus any trailing closing quotes or
/// brackets) when the next non-space character is uppercase or an opening
/// quote. A period after a stoplisted abbreviation or a single-letter initial
/// does not end a sentence. Blank lines always end a sentence.
#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: Vec<String>,
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "al", "fig",
    "figs", "eq", "eqs", "no", "nos", "vol", "pp", "cf", "approx", "inc", "ltd", "co", "corp",
    "gen", "gov", "sen", "rep", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec", "u.s", "u.k", "sec", "ch",
];

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '('];

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RuleSegmenter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|s| s.into().trim_end_matches('.').to_lowercase())
                .collect(),
        }
    }

    fn is_abbreviation(&self, text: &str, period_at: usize) -> bool {
        let head = &text[..period_at];
        let word_start = head
            .char_indices()
            .rev()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '.'))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        let word = &head[word_start..];
        if word.is_empty() {
            return false;
        }
        let mut chars = word.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_uppercase() {
                return true;
            }
        }
        let lower = word.to_lowercase();
        self.abbreviations.contains(&lower)
    }

    /// Byte offsets where sentences end.
    fn boundaries(&self, raw: &str) -> Vec<usize> {
        let chars: Vec<(usize, char)> = raw.char_indices().collect();
        let mut cuts = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if c.is_whitespace() {
                let mut j = i;
                let mut newlines = 0;
                while j < chars.len() && chars[j].1.is_whitespace() {
                    if chars[j].1 == '\n' {
                        newlines += 1;
                    }
                    j += 1;
                }
                if newlines >= 2 {
                    cuts.push(pos);
                }
                i = j;
                continue;
            }
            if matches!(c, '.' | '!' | '?') {
                let mut j = i + 1;
                while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || CLOSERS.contains(&chars[j].1)) {
                    j += 1;
                }
                let end = chars.get(j).map_or(raw.len(), |&(p, _)| p);
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                let followed_by_space = k > j;
                let starts_new = chars
                    .get(k)
                    .is_some_and(|&(_, n)| n.is_uppercase() || OPENERS.contains(&n));
                let abbreviated = c == '.' && j == i + 1 && self.is_abbreviation(raw, pos);
                if followed_by_space && starts_new && !abbreviated {
                    cuts.push(end);
                }
                i = j;
                continue;
            }
            i += 1;
        }
        cuts
    }
}

impl Segmenter for RuleSegmenter {
    fn segment(&self, raw: &str) -> Vec<Sentence> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut push = |piece: &str| {
            let t = piece.trim();
            if !t.is_empty() {
                out.push(Sentence::new(out.len(), t));
            }
        };
        for cut in self.boundaries(raw) {
            push(&raw[start..cut]);
            start = cut;
        }
        push(&raw[start..]);
        out
    }
}

/// Segments with the default [`RuleSegmenter`].
pub fn segment_text(raw: &str) -> Vec<Sentence> {
    RuleSegmenter::default().segment(raw)
}
