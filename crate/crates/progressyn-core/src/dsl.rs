//! The block-program language: AST, textual syntax, and structural metrics.
//!
//! A program is a single `Run{...}` root holding a sequence of blocks.
//! Canonical text form separates sibling blocks with one space, e.g.
//! `Run{Repeat(4){move}}` or `Run{If(pathLeft){turnLeft} move}`.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Which world variant a code (and its grids) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dialect {
    Maze,
    Karel,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dialect::Maze => f.write_str("maze"),
            Dialect::Karel => f.write_str("karel"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Condition {
    // maze
    Goal,
    PathAhead,
    PathLeft,
    PathRight,
    // karel
    FrontIsClear,
    LeftIsClear,
    RightIsClear,
    MarkersPresent,
    NoMarkersPresent,
    Not(Box<Condition>),
}

impl Condition {
    /// The dialect this condition is legal in, or `None` for `not(...)`,
    /// which inherits from its operand.
    pub fn dialect(&self) -> Dialect {
        match self {
            Condition::Goal | Condition::PathAhead | Condition::PathLeft | Condition::PathRight => {
                Dialect::Maze
            }
            Condition::Not(inner) => inner.dialect(),
            _ => Dialect::Karel,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Condition::Goal => "goal",
            Condition::PathAhead => "pathAhead",
            Condition::PathLeft => "pathLeft",
            Condition::PathRight => "pathRight",
            Condition::FrontIsClear => "frontIsClear",
            Condition::LeftIsClear => "leftIsClear",
            Condition::RightIsClear => "rightIsClear",
            Condition::MarkersPresent => "markersPresent",
            Condition::NoMarkersPresent => "noMarkersPresent",
            Condition::Not(_) => "not",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Not(inner) => write!(f, "not({inner})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Block {
    Move,
    TurnLeft,
    TurnRight,
    PickMarker,
    PutMarker,
    Repeat {
        count: u32,
        body: Vec<Block>,
    },
    RepeatUntil {
        cond: Condition,
        body: Vec<Block>,
    },
    While {
        cond: Condition,
        body: Vec<Block>,
    },
    If {
        cond: Condition,
        body: Vec<Block>,
    },
    IfElse {
        cond: Condition,
        then_body: Vec<Block>,
        else_body: Vec<Block>,
    },
}

/// Block kind without structure, for store sets and coverage bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Move,
    TurnLeft,
    TurnRight,
    PickMarker,
    PutMarker,
    Repeat,
    RepeatUntil,
    While,
    If,
    IfElse,
}

impl BlockKind {
    pub const ALL: [BlockKind; 10] = [
        BlockKind::Move,
        BlockKind::TurnLeft,
        BlockKind::TurnRight,
        BlockKind::PickMarker,
        BlockKind::PutMarker,
        BlockKind::Repeat,
        BlockKind::RepeatUntil,
        BlockKind::While,
        BlockKind::If,
        BlockKind::IfElse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BlockKind::Move => "move",
            BlockKind::TurnLeft => "turnLeft",
            BlockKind::TurnRight => "turnRight",
            BlockKind::PickMarker => "pickMarker",
            BlockKind::PutMarker => "putMarker",
            BlockKind::Repeat => "Repeat",
            BlockKind::RepeatUntil => "RepeatUntil",
            BlockKind::While => "While",
            BlockKind::If => "If",
            BlockKind::IfElse => "IfElse",
        }
    }

    pub fn from_name(name: &str) -> Option<BlockKind> {
        BlockKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn is_action(&self) -> bool {
        matches!(
            self,
            BlockKind::Move
                | BlockKind::TurnLeft
                | BlockKind::TurnRight
                | BlockKind::PickMarker
                | BlockKind::PutMarker
        )
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Move => BlockKind::Move,
            Block::TurnLeft => BlockKind::TurnLeft,
            Block::TurnRight => BlockKind::TurnRight,
            Block::PickMarker => BlockKind::PickMarker,
            Block::PutMarker => BlockKind::PutMarker,
            Block::Repeat { .. } => BlockKind::Repeat,
            Block::RepeatUntil { .. } => BlockKind::RepeatUntil,
            Block::While { .. } => BlockKind::While,
            Block::If { .. } => BlockKind::If,
            Block::IfElse { .. } => BlockKind::IfElse,
        }
    }

    pub fn is_action(&self) -> bool {
        self.kind().is_action()
    }
}

/// One step into the AST: an index into a block body. `Then`/`Else` pick a
/// branch of an `IfElse`; every other construct body uses `Body`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathStep {
    Body(u32),
    Then(u32),
    Else(u32),
}

/// Address of a block relative to the `Run` root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AstPath(pub Vec<PathStep>);

impl AstPath {
    pub fn child(&self, step: PathStep) -> AstPath {
        let mut v = self.0.clone();
        v.push(step);
        AstPath(v)
    }
}

impl fmt::Display for AstPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Run")?;
        for step in &self.0 {
            match step {
                PathStep::Body(i) => write!(f, ".{i}")?,
                PathStep::Then(i) => write!(f, ".then{i}")?,
                PathStep::Else(i) => write!(f, ".else{i}")?,
            }
        }
        Ok(())
    }
}

/// A complete program: the `Run` root plus its top-level blocks, tagged with
/// the dialect it is written for. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Code {
    pub dialect: Dialect,
    pub body: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownBlock(String),
    UnknownCondition(String),
    EmptyBody,
    BadRepeatCount,
    MixedDialect,
    DialectMismatch { token: String, dialect: Dialect },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token '{t}'"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::UnknownBlock(n) => write!(f, "unknown block name '{n}'"),
            ParseErrorKind::UnknownCondition(n) => write!(f, "unknown condition '{n}'"),
            ParseErrorKind::EmptyBody => f.write_str("control block has an empty body"),
            ParseErrorKind::BadRepeatCount => f.write_str("Repeat count must be at least 1"),
            ParseErrorKind::MixedDialect => {
                f.write_str("code mixes maze-only and karel-only blocks")
            }
            ParseErrorKind::DialectMismatch { token, dialect } => {
                write!(f, "'{token}' is not available in the {dialect} dialect")
            }
        }
    }
}

impl core::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Name(&'a str),
    Int(u32),
    LParen,
    RParen,
    LBrace,
    RBrace,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            kind,
        }
    }

    fn bump(&mut self, c: char) {
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
    }

    /// Next token, or `None` at end of input.
    fn next(&mut self) -> Result<Option<(Tok<'a>, u32, u32)>, ParseError> {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.bump(c);
            } else {
                break;
            }
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.src[self.pos..].chars().next() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.bump(c);
                Tok::LParen
            }
            ')' => {
                self.bump(c);
                Tok::RParen
            }
            '{' => {
                self.bump(c);
                Tok::LBrace
            }
            '}' => {
                self.bump(c);
                Tok::RBrace
            }
            '0'..='9' => {
                let start = self.pos;
                while let Some(d) = self.src[self.pos..].chars().next() {
                    if d.is_ascii_digit() {
                        self.bump(d);
                    } else {
                        break;
                    }
                }
                let n: u32 = self.src[start..self.pos]
                    .parse()
                    .map_err(|_| self.err(ParseErrorKind::BadRepeatCount))?;
                Tok::Int(n)
            }
            c if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while let Some(d) = self.src[self.pos..].chars().next() {
                    if d.is_ascii_alphanumeric() {
                        self.bump(d);
                    } else {
                        break;
                    }
                }
                Tok::Name(&self.src[start..self.pos])
            }
            other => return Err(self.err(ParseErrorKind::UnexpectedChar(other))),
        };
        Ok(Some((tok, line, col)))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Tok<'a>, u32, u32)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<Option<(Tok<'a>, u32, u32)>, ParseError> {
        if self.peeked.is_none() {
            self.peeked = self.lexer.next()?;
        }
        Ok(self.peeked)
    }

    fn advance(&mut self) -> Result<(Tok<'a>, u32, u32), ParseError> {
        match self.peek()? {
            Some(t) => {
                self.peeked = None;
                Ok(t)
            }
            None => Err(self.lexer.err(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expect(&mut self, want: Tok<'a>) -> Result<(), ParseError> {
        let (tok, line, col) = self.advance()?;
        if tok == want {
            Ok(())
        } else {
            Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::UnexpectedToken(tok_text(tok)),
            })
        }
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let (tok, line, col) = self.advance()?;
        let name = match tok {
            Tok::Name(n) => n,
            other => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnexpectedToken(tok_text(other)),
                })
            }
        };
        let cond = match name {
            "goal" => Condition::Goal,
            "pathAhead" => Condition::PathAhead,
            "pathLeft" => Condition::PathLeft,
            "pathRight" => Condition::PathRight,
            "frontIsClear" => Condition::FrontIsClear,
            "leftIsClear" => Condition::LeftIsClear,
            "rightIsClear" => Condition::RightIsClear,
            "markersPresent" => Condition::MarkersPresent,
            "noMarkersPresent" => Condition::NoMarkersPresent,
            "not" => {
                self.expect(Tok::LParen)?;
                let inner = self.condition()?;
                self.expect(Tok::RParen)?;
                Condition::Not(Box::new(inner))
            }
            other => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnknownCondition(String::from(other)),
                })
            }
        };
        Ok(cond)
    }

    /// `{ block* }`, erroring on an empty body when `require_nonempty`.
    fn body(&mut self, require_nonempty: bool) -> Result<Vec<Block>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut blocks = Vec::new();
        loop {
            match self.peek()? {
                Some((Tok::RBrace, line, col)) => {
                    self.advance()?;
                    if blocks.is_empty() && require_nonempty {
                        return Err(ParseError {
                            line,
                            col,
                            kind: ParseErrorKind::EmptyBody,
                        });
                    }
                    return Ok(blocks);
                }
                Some(_) => blocks.push(self.block()?),
                None => return Err(self.lexer.err(ParseErrorKind::UnexpectedEnd)),
            }
        }
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let (tok, line, col) = self.advance()?;
        let name = match tok {
            Tok::Name(n) => n,
            other => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnexpectedToken(tok_text(other)),
                })
            }
        };
        let block = match name {
            "move" => Block::Move,
            "turnLeft" => Block::TurnLeft,
            "turnRight" => Block::TurnRight,
            "pickMarker" => Block::PickMarker,
            "putMarker" => Block::PutMarker,
            "Repeat" => {
                self.expect(Tok::LParen)?;
                let (tok, cline, ccol) = self.advance()?;
                let count = match tok {
                    Tok::Int(n) if n >= 1 => n,
                    Tok::Int(_) => {
                        return Err(ParseError {
                            line: cline,
                            col: ccol,
                            kind: ParseErrorKind::BadRepeatCount,
                        })
                    }
                    other => {
                        return Err(ParseError {
                            line: cline,
                            col: ccol,
                            kind: ParseErrorKind::UnexpectedToken(tok_text(other)),
                        })
                    }
                };
                self.expect(Tok::RParen)?;
                let body = self.body(true)?;
                Block::Repeat { count, body }
            }
            "RepeatUntil" | "While" | "If" => {
                self.expect(Tok::LParen)?;
                let cond = self.condition()?;
                self.expect(Tok::RParen)?;
                let body = self.body(true)?;
                match name {
                    "RepeatUntil" => Block::RepeatUntil { cond, body },
                    "While" => Block::While { cond, body },
                    _ => Block::If { cond, body },
                }
            }
            "IfElse" => {
                self.expect(Tok::LParen)?;
                let cond = self.condition()?;
                self.expect(Tok::RParen)?;
                let then_body = self.body(true)?;
                let else_body = self.body(true)?;
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                }
            }
            other => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnknownBlock(String::from(other)),
                })
            }
        };
        Ok(block)
    }
}

fn tok_text(tok: Tok<'_>) -> String {
    use alloc::string::ToString;
    match tok {
        Tok::Name(n) => String::from(n),
        Tok::Int(n) => n.to_string(),
        Tok::LParen => String::from("("),
        Tok::RParen => String::from(")"),
        Tok::LBrace => String::from("{"),
        Tok::RBrace => String::from("}"),
    }
}

/// Dialect evidence carried by a block subtree: maze-only markers, karel-only
/// markers, or neither.
fn dialect_evidence(blocks: &[Block]) -> (bool, bool) {
    let mut maze = false;
    let mut karel = false;
    fn cond_ev(c: &Condition, maze: &mut bool, karel: &mut bool) {
        match c.dialect() {
            Dialect::Maze => *maze = true,
            Dialect::Karel => *karel = true,
        }
    }
    fn walk(blocks: &[Block], maze: &mut bool, karel: &mut bool) {
        for b in blocks {
            match b {
                Block::PickMarker | Block::PutMarker => *karel = true,
                Block::Repeat { body, .. } => walk(body, maze, karel),
                Block::RepeatUntil { cond, body } | Block::While { cond, body } | Block::If { cond, body } => {
                    cond_ev(cond, maze, karel);
                    walk(body, maze, karel);
                }
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => {
                    cond_ev(cond, maze, karel);
                    walk(then_body, maze, karel);
                    walk(else_body, maze, karel);
                }
                _ => {}
            }
        }
    }
    walk(blocks, &mut maze, &mut karel);
    (maze, karel)
}

impl Code {
    pub fn new(dialect: Dialect, body: Vec<Block>) -> Code {
        Code { dialect, body }
    }

    /// The empty program `Run{}` in the given dialect.
    pub fn empty(dialect: Dialect) -> Code {
        Code {
            dialect,
            body: Vec::new(),
        }
    }

    /// Parses canonical text, inferring the dialect from the blocks used.
    /// Programs with no dialect-specific block default to maze; mixing
    /// dialect-specific blocks of both variants is an error.
    pub fn parse(source: &str) -> Result<Code, ParseError> {
        let mut parser = Parser {
            lexer: Lexer::new(source),
            peeked: None,
        };
        let (tok, line, col) = parser.advance()?;
        match tok {
            Tok::Name("Run") => {}
            other => {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnexpectedToken(tok_text(other)),
                })
            }
        }
        let body = parser.body(false)?;
        if let Some((tok, line, col)) = parser.peek()? {
            return Err(ParseError {
                line,
                col,
                kind: ParseErrorKind::UnexpectedToken(tok_text(tok)),
            });
        }
        let dialect = match dialect_evidence(&body) {
            (true, true) => {
                return Err(ParseError {
                    line: 1,
                    col: 1,
                    kind: ParseErrorKind::MixedDialect,
                })
            }
            (false, true) => Dialect::Karel,
            _ => Dialect::Maze,
        };
        Ok(Code { dialect, body })
    }

    /// Parses text that must be legal in `dialect`.
    pub fn parse_with_dialect(source: &str, dialect: Dialect) -> Result<Code, ParseError> {
        let code = Code::parse(source)?;
        let (maze, karel) = dialect_evidence(&code.body);
        let bad = match dialect {
            Dialect::Maze => karel.then_some("karel block"),
            Dialect::Karel => maze.then_some("maze block"),
        };
        if let Some(token) = bad {
            return Err(ParseError {
                line: 1,
                col: 1,
                kind: ParseErrorKind::DialectMismatch {
                    token: String::from(token),
                    dialect,
                },
            });
        }
        Ok(Code { dialect, ..code })
    }

    /// Canonical text form; `parse(serialize(c))` is structurally `c`.
    pub fn serialize(&self) -> String {
        use core::fmt::Write;
        let mut out = String::from("Run{");
        write_body(&mut out, &self.body);
        let _ = write!(out, "}}");
        out
    }

    /// Construct-nesting depth: `Run{}` is 1, each nested control level adds 1.
    pub fn depth(&self) -> u32 {
        1 + nesting(&self.body)
    }

    /// Number of blocks excluding the `Run` root; conditions are not counted.
    pub fn size(&self) -> u32 {
        block_count(&self.body)
    }

    /// Distinct block kinds appearing in the code, excluding `Run`.
    pub fn blocks(&self) -> BTreeSet<BlockKind> {
        let mut set = BTreeSet::new();
        collect_kinds(&self.body, &mut set);
        set
    }

    /// Total number of AST nodes excluding `Run` (same as `size`, kept as a
    /// named denominator for coverage fractions).
    pub fn node_count(&self) -> u32 {
        self.size()
    }

    /// Looks up the block at `path`, if the path is valid.
    pub fn block_at(&self, path: &AstPath) -> Option<&Block> {
        let mut steps = path.0.iter();
        let first = steps.next()?;
        let mut cur = match first {
            PathStep::Body(i) => self.body.get(*i as usize)?,
            _ => return None,
        };
        for step in steps {
            cur = match (step, cur) {
                (PathStep::Body(i), Block::Repeat { body, .. })
                | (PathStep::Body(i), Block::RepeatUntil { body, .. })
                | (PathStep::Body(i), Block::While { body, .. })
                | (PathStep::Body(i), Block::If { body, .. }) => body.get(*i as usize)?,
                (PathStep::Then(i), Block::IfElse { then_body, .. }) => {
                    then_body.get(*i as usize)?
                }
                (PathStep::Else(i), Block::IfElse { else_body, .. }) => {
                    else_body.get(*i as usize)?
                }
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Paths of every block in the AST, in pre-order.
    pub fn all_paths(&self) -> Vec<AstPath> {
        let mut out = Vec::new();
        fn walk(blocks: &[Block], prefix: &AstPath, out: &mut Vec<AstPath>) {
            for (i, b) in blocks.iter().enumerate() {
                let here = prefix.child(PathStep::Body(i as u32));
                match b {
                    Block::Repeat { body, .. }
                    | Block::RepeatUntil { body, .. }
                    | Block::While { body, .. }
                    | Block::If { body, .. } => {
                        out.push(here.clone());
                        walk(body, &here, out);
                    }
                    Block::IfElse {
                        then_body,
                        else_body,
                        ..
                    } => {
                        out.push(here.clone());
                        // Branch bodies are addressed through Then/Else steps.
                        for (j, _) in then_body.iter().enumerate() {
                            walk_one(&then_body[j], here.child(PathStep::Then(j as u32)), out);
                        }
                        for (j, _) in else_body.iter().enumerate() {
                            walk_one(&else_body[j], here.child(PathStep::Else(j as u32)), out);
                        }
                    }
                    _ => out.push(here),
                }
            }
        }
        fn walk_one(b: &Block, here: AstPath, out: &mut Vec<AstPath>) {
            out.push(here.clone());
            match b {
                Block::Repeat { body, .. }
                | Block::RepeatUntil { body, .. }
                | Block::While { body, .. }
                | Block::If { body, .. } => {
                    for (i, c) in body.iter().enumerate() {
                        walk_one(c, here.child(PathStep::Body(i as u32)), out);
                    }
                }
                Block::IfElse {
                    then_body,
                    else_body,
                    ..
                } => {
                    for (i, c) in then_body.iter().enumerate() {
                        walk_one(c, here.child(PathStep::Then(i as u32)), out);
                    }
                    for (i, c) in else_body.iter().enumerate() {
                        walk_one(c, here.child(PathStep::Else(i as u32)), out);
                    }
                }
                _ => {}
            }
        }
        walk(&self.body, &AstPath::default(), &mut out);
        out
    }
}

fn write_body(out: &mut String, blocks: &[Block]) {
    use core::fmt::Write;
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match b {
            Block::Move => out.push_str("move"),
            Block::TurnLeft => out.push_str("turnLeft"),
            Block::TurnRight => out.push_str("turnRight"),
            Block::PickMarker => out.push_str("pickMarker"),
            Block::PutMarker => out.push_str("putMarker"),
            Block::Repeat { count, body } => {
                let _ = write!(out, "Repeat({count}){{");
                write_body(out, body);
                out.push('}');
            }
            Block::RepeatUntil { cond, body } => {
                let _ = write!(out, "RepeatUntil({cond}){{");
                write_body(out, body);
                out.push('}');
            }
            Block::While { cond, body } => {
                let _ = write!(out, "While({cond}){{");
                write_body(out, body);
                out.push('}');
            }
            Block::If { cond, body } => {
                let _ = write!(out, "If({cond}){{");
                write_body(out, body);
                out.push('}');
            }
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                let _ = write!(out, "IfElse({cond}){{");
                write_body(out, then_body);
                out.push_str("}{");
                write_body(out, else_body);
                out.push('}');
            }
        }
    }
}

fn nesting(blocks: &[Block]) -> u32 {
    blocks
        .iter()
        .map(|b| match b {
            Block::Repeat { body, .. }
            | Block::RepeatUntil { body, .. }
            | Block::While { body, .. }
            | Block::If { body, .. } => 1 + nesting(body),
            Block::IfElse {
                then_body,
                else_body,
                ..
            } => 1 + nesting(then_body).max(nesting(else_body)),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

fn block_count(blocks: &[Block]) -> u32 {
    blocks
        .iter()
        .map(|b| match b {
            Block::Repeat { body, .. }
            | Block::RepeatUntil { body, .. }
            | Block::While { body, .. }
            | Block::If { body, .. } => 1 + block_count(body),
            Block::IfElse {
                then_body,
                else_body,
                ..
            } => 1 + block_count(then_body) + block_count(else_body),
            _ => 1,
        })
        .sum()
}

fn collect_kinds(blocks: &[Block], set: &mut BTreeSet<BlockKind>) {
    for b in blocks {
        set.insert(b.kind());
        match b {
            Block::Repeat { body, .. }
            | Block::RepeatUntil { body, .. }
            | Block::While { body, .. }
            | Block::If { body, .. } => collect_kinds(body, set),
            Block::IfElse {
                then_body,
                else_body,
                ..
            } => {
                collect_kinds(then_body, set);
                collect_kinds(else_body, set);
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_empty_program() {
        let c = Code::parse("Run{}").unwrap();
        assert!(c.body.is_empty());
        assert_eq!(c.serialize(), "Run{}");
        assert_eq!(c.depth(), 1);
        assert_eq!(c.size(), 0);
        assert!(c.blocks().is_empty());
    }

    #[test]
    fn parses_repeat_move() {
        let c = Code::parse("Run{Repeat(4){move}}").unwrap();
        assert_eq!(
            c.body,
            alloc::vec![Block::Repeat {
                count: 4,
                body: alloc::vec![Block::Move]
            }]
        );
        assert_eq!(c.depth(), 2);
        assert_eq!(c.size(), 2);
        assert_eq!(c.serialize(), "Run{Repeat(4){move}}");
        let kinds: Vec<_> = c.blocks().into_iter().collect();
        assert_eq!(kinds, alloc::vec![BlockKind::Move, BlockKind::Repeat]);
    }

    #[test]
    fn parses_if_and_trailing_action() {
        let c = Code::parse("Run{If(pathLeft){turnLeft} move}").unwrap();
        assert_eq!(c.dialect, Dialect::Maze);
        assert_eq!(c.body.len(), 2);
        assert_eq!(c.serialize(), "Run{If(pathLeft){turnLeft} move}");
        let kinds: Vec<_> = c.blocks().into_iter().collect();
        assert_eq!(
            kinds,
            alloc::vec![BlockKind::Move, BlockKind::TurnLeft, BlockKind::If]
        );
    }

    #[test]
    fn nested_karel_depth() {
        let c = Code::parse("Run{While(frontIsClear){If(markersPresent){pickMarker}}}").unwrap();
        assert_eq!(c.dialect, Dialect::Karel);
        assert_eq!(c.depth(), 3);
    }

    #[test]
    fn three_actions_size() {
        let c = Code::parse("Run{move move move}").unwrap();
        assert_eq!(c.size(), 3);
        assert_eq!(c.depth(), 1);
    }

    #[test]
    fn rejects_empty_body() {
        let err = Code::parse("Run{Repeat(4){}}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::EmptyBody);
    }

    #[test]
    fn rejects_zero_repeat() {
        let err = Code::parse("Run{Repeat(0){move}}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::BadRepeatCount);
    }

    #[test]
    fn rejects_unknown_block_with_position() {
        let err = Code::parse("Run{move hop}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownBlock(String::from("hop")));
        assert_eq!((err.line, err.col), (1, 10));
    }

    #[test]
    fn rejects_mixed_dialect() {
        let err = Code::parse("Run{If(pathLeft){pickMarker}}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MixedDialect);
    }

    #[test]
    fn dialect_override_for_neutral_code() {
        let c = Code::parse_with_dialect("Run{Repeat(4){move}}", Dialect::Karel).unwrap();
        assert_eq!(c.dialect, Dialect::Karel);
        let err = Code::parse_with_dialect("Run{If(pathLeft){move}}", Dialect::Karel).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::DialectMismatch { .. }));
    }

    #[test]
    fn ifelse_round_trip_and_paths() {
        let c = Code::parse("Run{IfElse(markersPresent){pickMarker}{putMarker} move}").unwrap();
        assert_eq!(
            c.serialize(),
            "Run{IfElse(markersPresent){pickMarker}{putMarker} move}"
        );
        assert_eq!(c.size(), 4);
        let then_path = AstPath(alloc::vec![PathStep::Body(0), PathStep::Then(0)]);
        assert_eq!(c.block_at(&then_path), Some(&Block::PickMarker));
        let else_path = AstPath(alloc::vec![PathStep::Body(0), PathStep::Else(0)]);
        assert_eq!(c.block_at(&else_path), Some(&Block::PutMarker));
        assert_eq!(c.all_paths().len(), 4);
    }

    #[test]
    fn not_condition_round_trip() {
        let c = Code::parse("Run{While(not(markersPresent)){move}}").unwrap();
        assert_eq!(c.serialize(), "Run{While(not(markersPresent)){move}}");
        assert_eq!(c.dialect, Dialect::Karel);
    }
}
