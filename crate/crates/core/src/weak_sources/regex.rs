//! Leftmost-longest regular expression matching over `char` slices.
//!
//! Patterns are parsed with `regex-syntax` (which rejects backreferences and
//! lookaround) and compiled to a Thompson NFA. The NFA is simulated one char
//! at a time, so match offsets are char offsets and the search is linear in
//! the text for a fixed pattern.

use regex_syntax::hir::{Class, Hir, HirKind, Look};
use thiserror::Error;

const MAX_PROGRAM_LEN: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid pattern: {message}")]
pub struct PatternError {
    pub message: String,
}

impl PatternError {
    fn new(message: impl Into<String>) -> Self {
        PatternError {
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
enum Inst {
    Ranges(Box<[(char, char)]>),
    Split(usize, usize),
    Jump(usize),
    Assert(Look),
    Match,
}

/// A compiled pattern.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    program: Vec<Inst>,
}

impl Pattern {
    pub fn new(pattern: &str) -> Result<Self, PatternError> {
        let hir = regex_syntax::ParserBuilder::new()
            .build()
            .parse(pattern)
            .map_err(|e| PatternError::new(e.to_string()))?;
        let mut compiler = Compiler::default();
        compiler.emit(&hir)?;
        compiler.push(Inst::Match)?;
        Ok(Pattern {
            source: pattern.to_string(),
            program: compiler.program,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Leftmost-longest non-empty match starting at or after `from`.
    pub fn find_at(&self, haystack: &[char], from: usize) -> Option<(usize, usize)> {
        self.run(haystack, from, false)
    }

    /// All non-overlapping leftmost-longest non-empty matches, left to right.
    pub fn find_iter(&self, haystack: &[char]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < haystack.len() {
            match self.find_at(haystack, pos) {
                Some((s, e)) => {
                    out.push((s, e));
                    pos = e;
                }
                None => break,
            }
        }
        out
    }

    /// True when the pattern matches all of `haystack`.
    pub fn is_full_match(&self, haystack: &[char]) -> bool {
        if haystack.is_empty() {
            return false;
        }
        matches!(self.run(haystack, 0, true), Some((0, e)) if e == haystack.len())
    }

    fn run(&self, hay: &[char], from: usize, anchored: bool) -> Option<(usize, usize)> {
        let n = hay.len();
        if from > n {
            return None;
        }
        let mut threads = Threads::new(self.program.len());
        let mut current: Vec<(usize, usize)> = Vec::new();
        let mut next: Vec<(usize, usize)> = Vec::new();
        let mut best: Option<(usize, usize)> = None;

        threads.generation += 1;
        for pos in from..=n {
            // Seed a thread for a match starting here. Carried threads are
            // already in `current` with earlier starts, which keeps the list
            // ordered by start.
            if best.is_none() && (!anchored || pos == from) {
                self.add_thread(&mut threads, &mut current, 0, pos, pos, hay, best);
            }
            if current.is_empty() {
                if best.is_some() || anchored {
                    break;
                }
                threads.generation += 1;
                continue;
            }
            threads.generation += 1;
            for &(pc, start) in &current {
                if let Some((bs, _)) = best {
                    if start > bs {
                        continue;
                    }
                }
                match &self.program[pc] {
                    Inst::Ranges(ranges) => {
                        if pos < n && class_contains(ranges, hay[pos]) {
                            self.add_thread(&mut threads, &mut next, pc + 1, start, pos + 1, hay, best);
                        }
                    }
                    Inst::Match => {
                        if pos > start {
                            let better = match best {
                                None => true,
                                Some((bs, be)) => start < bs || (start == bs && pos > be),
                            };
                            if better {
                                best = Some((start, pos));
                            }
                        }
                    }
                    _ => unreachable!("epsilon instructions are resolved when threads are added"),
                }
            }
            std::mem::swap(&mut current, &mut next);
            next.clear();
            if pos == n {
                break;
            }
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn add_thread(
        &self,
        threads: &mut Threads,
        list: &mut Vec<(usize, usize)>,
        pc: usize,
        start: usize,
        pos: usize,
        hay: &[char],
        best: Option<(usize, usize)>,
    ) {
        if let Some((bs, _)) = best {
            if start > bs {
                return;
            }
        }
        threads.stack.push(pc);
        while let Some(pc) = threads.stack.pop() {
            if threads.seen[pc] == threads.generation {
                continue;
            }
            threads.seen[pc] = threads.generation;
            match &self.program[pc] {
                Inst::Jump(t) => threads.stack.push(*t),
                Inst::Split(a, b) => {
                    threads.stack.push(*b);
                    threads.stack.push(*a);
                }
                Inst::Assert(look) => {
                    if look_holds(*look, hay, pos) {
                        threads.stack.push(pc + 1);
                    }
                }
                Inst::Ranges(_) | Inst::Match => list.push((pc, start)),
            }
        }
    }
}

struct Threads {
    seen: Vec<u64>,
    generation: u64,
    stack: Vec<usize>,
}

impl Threads {
    fn new(len: usize) -> Self {
        Threads {
            seen: vec![0; len],
            generation: 0,
            stack: Vec::new(),
        }
    }
}

fn class_contains(ranges: &[(char, char)], c: char) -> bool {
    let idx = ranges.partition_point(|&(_, hi)| hi < c);
    idx < ranges.len() && ranges[idx].0 <= c
}

fn is_word_ascii(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_word_unicode(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn look_holds(look: Look, hay: &[char], pos: usize) -> bool {
    let prev = if pos > 0 { hay.get(pos - 1).copied() } else { None };
    let next = hay.get(pos).copied();
    match look {
        Look::Start => pos == 0,
        Look::End => pos == hay.len(),
        Look::StartLF => prev.is_none() || prev == Some('\n'),
        Look::EndLF => next.is_none() || next == Some('\n'),
        Look::StartCRLF => {
            prev.is_none() || prev == Some('\n') || (prev == Some('\r') && next != Some('\n'))
        }
        Look::EndCRLF => {
            next.is_none() || next == Some('\r') || (next == Some('\n') && prev != Some('\r'))
        }
        Look::WordAscii => is_word_ascii(prev) != is_word_ascii(next),
        Look::WordAsciiNegate => is_word_ascii(prev) == is_word_ascii(next),
        Look::WordUnicode => is_word_unicode(prev) != is_word_unicode(next),
        Look::WordUnicodeNegate => is_word_unicode(prev) == is_word_unicode(next),
        Look::WordStartAscii => !is_word_ascii(prev) && is_word_ascii(next),
        Look::WordEndAscii => is_word_ascii(prev) && !is_word_ascii(next),
        Look::WordStartUnicode => !is_word_unicode(prev) && is_word_unicode(next),
        Look::WordEndUnicode => is_word_unicode(prev) && !is_word_unicode(next),
        Look::WordStartHalfAscii => !is_word_ascii(prev),
        Look::WordEndHalfAscii => !is_word_ascii(next),
        Look::WordStartHalfUnicode => !is_word_unicode(prev),
        Look::WordEndHalfUnicode => !is_word_unicode(next),
    }
}

#[derive(Default)]
struct Compiler {
    program: Vec<Inst>,
}

impl Compiler {
    fn push(&mut self, inst: Inst) -> Result<usize, PatternError> {
        if self.program.len() >= MAX_PROGRAM_LEN {
            return Err(PatternError::new("pattern is too large once compiled"));
        }
        self.program.push(inst);
        Ok(self.program.len() - 1)
    }

    fn pc(&self) -> usize {
        self.program.len()
    }

    fn emit(&mut self, hir: &Hir) -> Result<(), PatternError> {
        match hir.kind() {
            HirKind::Empty => {}
            HirKind::Literal(lit) => {
                let s = std::str::from_utf8(&lit.0)
                    .map_err(|_| PatternError::new("byte-oriented literals are not supported"))?;
                for c in s.chars() {
                    self.push(Inst::Ranges(Box::new([(c, c)])))?;
                }
            }
            HirKind::Class(Class::Unicode(cls)) => {
                let ranges: Box<[(char, char)]> =
                    cls.ranges().iter().map(|r| (r.start(), r.end())).collect();
                self.push(Inst::Ranges(ranges))?;
            }
            HirKind::Class(Class::Bytes(cls)) => {
                let mut ranges = Vec::new();
                for r in cls.ranges() {
                    if r.end() > 0x7f {
                        return Err(PatternError::new("non-ASCII byte classes are not supported"));
                    }
                    ranges.push((r.start() as char, r.end() as char));
                }
                self.push(Inst::Ranges(ranges.into_boxed_slice()))?;
            }
            HirKind::Look(look) => {
                self.push(Inst::Assert(*look))?;
            }
            HirKind::Capture(cap) => self.emit(&cap.sub)?,
            HirKind::Concat(subs) => {
                for sub in subs {
                    self.emit(sub)?;
                }
            }
            HirKind::Alternation(alts) => {
                let mut jumps = Vec::new();
                for (i, alt) in alts.iter().enumerate() {
                    if i + 1 < alts.len() {
                        let split = self.push(Inst::Split(0, 0))?;
                        self.emit(alt)?;
                        jumps.push(self.push(Inst::Jump(0))?);
                        let after = self.pc();
                        self.program[split] = Inst::Split(split + 1, after);
                    } else {
                        self.emit(alt)?;
                    }
                }
                let end = self.pc();
                for j in jumps {
                    self.program[j] = Inst::Jump(end);
                }
            }
            HirKind::Repetition(rep) => {
                for _ in 0..rep.min {
                    self.emit(&rep.sub)?;
                }
                match rep.max {
                    None => {
                        let split = self.push(Inst::Split(0, 0))?;
                        self.emit(&rep.sub)?;
                        self.push(Inst::Jump(split))?;
                        let end = self.pc();
                        self.program[split] = Inst::Split(split + 1, end);
                    }
                    Some(max) => {
                        let mut splits = Vec::new();
                        for _ in rep.min..max {
                            splits.push(self.push(Inst::Split(0, 0))?);
                            self.emit(&rep.sub)?;
                        }
                        let end = self.pc();
                        for s in splits {
                            self.program[s] = Inst::Split(s + 1, end);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
