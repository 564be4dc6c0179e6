//! Line-oriented assembly front end. See `docs/kernel-format.md` for the grammar.

use std::collections::BTreeMap;

use super::ir::{
    AffineExpr, Body, Builtin, Condition, Instruction, Kernel, Opcode, Operand, DEFAULT_REGISTERS,
    MAX_REGISTERS,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("label `{0}` defined twice")]
    DuplicateLabel(String),
    #[error("label `{0}` does not precede an instruction")]
    DanglingLabel(String),
    #[error("register r{reg} out of range (kernel declares {count})")]
    RegisterOutOfRange { reg: u32, count: u16 },
    #[error("width must be at least 1")]
    ZeroWidth,
    #[error("`{0}` only supports width 1")]
    ScalarOnly(Opcode),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("kernel has no instructions")]
    Empty,
    #[error("kernel must end with `halt`")]
    MissingHalt,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Comma,
    Colon,
    Dot,
    LBracket,
    RBracket,
    Plus,
    Minus,
    Star,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn describe(tok: Option<&Token>) -> String {
    match tok.map(|t| &t.tok) {
        None => "end of line".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Int(v)) => format!("`{v}`"),
        Some(Tok::Comma) => "`,`".into(),
        Some(Tok::Colon) => "`:`".into(),
        Some(Tok::Dot) => "`.`".into(),
        Some(Tok::LBracket) => "`[`".into(),
        Some(Tok::RBracket) => "`]`".into(),
        Some(Tok::Plus) => "`+`".into(),
        Some(Tok::Minus) => "`-`".into(),
        Some(Tok::Star) => "`*`".into(),
    }
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut i = 0;
    // 1-based column counted in characters
    while i < chars.len() {
        let (_, c) = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '.' => Some(Tok::Dot),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
            let cleaned = text.replace('_', "");
            let parsed = if let Some(hex) = cleaned.strip_prefix("0x").or_else(|| cleaned.strip_prefix("0X"))
            {
                u64::from_str_radix(hex, 16).map(|v| v as i64).ok()
            } else {
                cleaned.parse::<i64>().ok()
            };
            match parsed {
                Some(v) => out.push(Token {
                    tok: Tok::Int(v),
                    col,
                }),
                None => {
                    return Err(ParseError {
                        line: line_no,
                        column: col,
                        kind: ParseErrorKind::Syntax(format!("invalid integer literal `{text}`")),
                    })
                }
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
            out.push(Token {
                tok: Tok::Ident(text),
                col,
            });
            continue;
        }
        return Err(ParseError {
            line: line_no,
            column: col,
            kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
        });
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    /// column reported when the line runs out of tokens
    eol_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn col(&self) -> usize {
        self.peek().map(|t| t.col).unwrap_or(self.eol_col)
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column: self.col(),
            kind,
        }
    }

    fn err_at(&self, col: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column: col,
            kind,
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        self.err(ParseErrorKind::Syntax(format!(
            "expected {wanted}, found {}",
            describe(self.peek())
        )))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, wanted: &str) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> Result<(String, usize), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                col,
            }) => {
                self.pos += 1;
                Ok((s.clone(), *col))
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn signed_int(&mut self) -> Result<i64, ParseError> {
        let negative = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Token { tok: Tok::Int(v), .. }) => {
                let v = *v;
                self.pos += 1;
                Ok(if negative { v.wrapping_neg() } else { v })
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn builtin(name: &str) -> Option<Builtin> {
    let (prefix, dim) = name.split_at(name.len().checked_sub(1)?);
    let dim = match dim {
        "0" => 0,
        "1" => 1,
        "2" => 2,
        _ => return None,
    };
    Some(match prefix {
        "gid" => Builtin::GlobalId(dim),
        "lid" => Builtin::LocalId(dim),
        "grp" => Builtin::GroupId(dim),
        "gsz" => Builtin::GlobalSize(dim),
        "lsz" => Builtin::LocalSize(dim),
        _ => return None,
    })
}

fn register(name: &str) -> Option<u32> {
    let digits = name.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

struct Parser {
    name: Option<String>,
    params: Vec<String>,
    registers: Option<(u16, usize, usize)>,
    instructions: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
    pending_labels: Vec<(String, usize, usize)>,
    /// (register, line, column) for deferred range checks
    reg_refs: Vec<(u32, usize, usize)>,
    /// (instruction index, label, line, column) for deferred resolution
    label_refs: Vec<(usize, String, usize, usize)>,
}

impl Parser {
    fn atom(&mut self, cur: &mut Cursor<'_>) -> Result<Operand, ParseError> {
        let (name, col) = cur.ident("register, builtin or parameter")?;
        if let Some(reg) = register(&name) {
            self.reg_refs.push((reg, cur.line, col));
            return Ok(Operand::Reg(reg.min(u16::MAX as u32) as u16));
        }
        if let Some(b) = builtin(&name) {
            return Ok(Operand::Builtin(b));
        }
        match self.params.iter().position(|p| *p == name) {
            Some(idx) => Ok(Operand::Param(idx)),
            None => Err(cur.err_at(col, ParseErrorKind::UnknownParam(name))),
        }
    }

    fn operand(&mut self, cur: &mut Cursor<'_>) -> Result<Operand, ParseError> {
        match cur.peek().map(|t| &t.tok) {
            Some(Tok::Int(_)) | Some(Tok::Minus) => Ok(Operand::Imm(cur.signed_int()?)),
            Some(Tok::Ident(_)) => self.atom(cur),
            _ => Err(cur.unexpected("operand")),
        }
    }

    fn dst(&mut self, cur: &mut Cursor<'_>) -> Result<u16, ParseError> {
        let col = cur.col();
        match self.operand(cur)? {
            Operand::Reg(r) => Ok(r),
            _ => Err(cur.err_at(
                col,
                ParseErrorKind::Syntax("destination must be a register".into()),
            )),
        }
    }

    fn affine(&mut self, cur: &mut Cursor<'_>) -> Result<AffineExpr, ParseError> {
        cur.expect(&Tok::LBracket, "`[`")?;
        let mut expr = AffineExpr::default();
        let mut sign: i64 = if cur.eat(&Tok::Minus) {
            -1
        } else {
            cur.eat(&Tok::Plus);
            1
        };
        loop {
            match cur.peek().map(|t| &t.tok) {
                Some(Tok::Int(v)) => {
                    let v = *v;
                    cur.pos += 1;
                    if cur.eat(&Tok::Star) {
                        let atom = self.atom(cur)?;
                        expr.terms.push((sign.wrapping_mul(v), atom));
                    } else {
                        expr.constant = expr.constant.wrapping_add(sign.wrapping_mul(v));
                    }
                }
                Some(Tok::Ident(_)) => {
                    let atom = self.atom(cur)?;
                    let coeff = if cur.eat(&Tok::Star) { cur.signed_int()? } else { 1 };
                    expr.terms.push((sign.wrapping_mul(coeff), atom));
                }
                _ => return Err(cur.unexpected("address term")),
            }
            if cur.eat(&Tok::Plus) {
                sign = 1;
            } else if cur.eat(&Tok::Minus) {
                sign = -1;
            } else {
                break;
            }
        }
        cur.expect(&Tok::RBracket, "`]`")?;
        Ok(expr)
    }

    fn directive(&mut self, cur: &mut Cursor<'_>) -> Result<(), ParseError> {
        let (name, col) = cur.ident("directive name")?;
        match name.as_str() {
            "kernel" => {
                let (ident, _) = cur.ident("kernel name")?;
                self.name = Some(ident);
            }
            "params" => loop {
                let (ident, pcol) = cur.ident("parameter name")?;
                if register(&ident).is_some() || builtin(&ident).is_some() {
                    return Err(cur.err_at(
                        pcol,
                        ParseErrorKind::Syntax(format!("`{ident}` is a reserved name")),
                    ));
                }
                if !self.params.contains(&ident) {
                    self.params.push(ident);
                }
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            },
            "regs" => {
                let rcol = cur.col();
                let count = cur.signed_int()?;
                if !(1..=MAX_REGISTERS as i64).contains(&count) {
                    return Err(cur.err_at(
                        rcol,
                        ParseErrorKind::Syntax(format!("register count must be in 1..={MAX_REGISTERS}")),
                    ));
                }
                self.registers = Some((count as u16, cur.line, rcol));
            }
            other => {
                return Err(cur.err_at(
                    col,
                    ParseErrorKind::Syntax(format!("unknown directive `.{other}`")),
                ))
            }
        }
        Ok(())
    }

    fn instruction(&mut self, cur: &mut Cursor<'_>) -> Result<(), ParseError> {
        let (mnemonic, op_col) = cur.ident("instruction")?;
        let opcode: Opcode = mnemonic
            .parse()
            .map_err(|_| cur.err_at(op_col, ParseErrorKind::UnknownOpcode(mnemonic.clone())))?;

        let mut width: u32 = 1;
        let mut cond: Option<Condition> = None;
        while cur.eat(&Tok::Dot) {
            let (suffix, scol) = cur.ident("suffix")?;
            if let Some(digits) = suffix.strip_prefix('w') {
                let w: u32 = digits
                    .parse()
                    .map_err(|_| cur.err_at(scol, ParseErrorKind::Syntax(format!("bad width `{suffix}`"))))?;
                if w == 0 {
                    return Err(cur.err_at(scol, ParseErrorKind::ZeroWidth));
                }
                if opcode.is_scalar_only() && w != 1 {
                    return Err(cur.err_at(scol, ParseErrorKind::ScalarOnly(opcode)));
                }
                width = w;
            } else if let (Opcode::Cmp, Ok(c)) = (opcode, suffix.parse::<Condition>()) {
                cond = Some(c);
            } else {
                return Err(cur.err_at(
                    scol,
                    ParseErrorKind::Syntax(format!("unknown suffix `.{suffix}` for `{opcode}`")),
                ));
            }
        }

        let index = self.instructions.len();
        let body = match opcode {
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Div
            | Opcode::And
            | Opcode::Or
            | Opcode::Xor
            | Opcode::Shl => {
                let dst = self.dst(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let lhs = self.operand(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let rhs = self.operand(cur)?;
                Body::Binary { dst, lhs, rhs }
            }
            Opcode::Mad => {
                let dst = self.dst(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let a = self.operand(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let b = self.operand(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let c = self.operand(cur)?;
                Body::Mad { dst, a, b, c }
            }
            Opcode::Cmp => {
                let cond = cond.ok_or_else(|| {
                    cur.err_at(
                        op_col,
                        ParseErrorKind::Syntax(
                            "`cmp` needs a condition suffix (.lt .le .eq .ne .gt .ge)".into(),
                        ),
                    )
                })?;
                let dst = self.dst(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let lhs = self.operand(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let rhs = self.operand(cur)?;
                Body::Cmp { cond, dst, lhs, rhs }
            }
            Opcode::Mov => {
                let dst = self.dst(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let src = self.operand(cur)?;
                Body::Mov { dst, src }
            }
            Opcode::Load => {
                let dst = self.dst(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let addr = self.affine(cur)?;
                Body::Load { dst, addr }
            }
            Opcode::Store => {
                let addr = self.affine(cur)?;
                cur.expect(&Tok::Comma, "`,`")?;
                let src = self.operand(cur)?;
                Body::Store { addr, src }
            }
            Opcode::Br => {
                let (label, lcol) = cur.ident("branch target label")?;
                self.label_refs.push((index, label, cur.line, lcol));
                let cond = if cur.eat(&Tok::Comma) {
                    Some(self.operand(cur)?)
                } else {
                    None
                };
                Body::Branch {
                    target: usize::MAX,
                    cond,
                }
            }
            Opcode::Barrier => Body::Barrier,
            Opcode::Halt => Body::Halt,
        };
        if !cur.done() {
            return Err(cur.unexpected("end of line"));
        }
        for (label, line, col) in self.pending_labels.drain(..) {
            if self.labels.insert(label.clone(), index).is_some() {
                return Err(ParseError {
                    line,
                    column: col,
                    kind: ParseErrorKind::DuplicateLabel(label),
                });
            }
        }
        self.instructions.push(Instruction { opcode, width, body });
        Ok(())
    }

    fn line(&mut self, toks: &[Token], line_no: usize, eol_col: usize) -> Result<(), ParseError> {
        let mut cur = Cursor {
            toks,
            pos: 0,
            line: line_no,
            eol_col,
        };
        // any number of `label:` prefixes
        while let (
            Some(Token {
                tok: Tok::Ident(name),
                col,
            }),
            Some(Token { tok: Tok::Colon, .. }),
        ) = (toks.get(cur.pos), toks.get(cur.pos + 1))
        {
            if self.labels.contains_key(name) || self.pending_labels.iter().any(|(l, ..)| l == name) {
                return Err(cur.err_at(*col, ParseErrorKind::DuplicateLabel(name.clone())));
            }
            self.pending_labels.push((name.clone(), line_no, *col));
            cur.pos += 2;
        }
        if cur.done() {
            return Ok(());
        }
        if cur.eat(&Tok::Dot) {
            self.directive(&mut cur)?;
            if !cur.done() {
                return Err(cur.unexpected("end of line"));
            }
            return Ok(());
        }
        self.instruction(&mut cur)
    }
}

/// Parses and validates a kernel from assembly text.
pub fn parse_kernel(text: &str) -> Result<Kernel, ParseError> {
    let mut p = Parser {
        name: None,
        params: Vec::new(),
        registers: None,
        instructions: Vec::new(),
        labels: BTreeMap::new(),
        pending_labels: Vec::new(),
        reg_refs: Vec::new(),
        label_refs: Vec::new(),
    };
    let mut last_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let toks = tokenize(raw, line_no)?;
        p.line(&toks, line_no, raw.chars().count() + 1)?;
    }

    if let Some((label, line, column)) = p.pending_labels.first().cloned() {
        return Err(ParseError {
            line,
            column,
            kind: ParseErrorKind::DanglingLabel(label),
        });
    }
    match p.instructions.last() {
        None => {
            return Err(ParseError {
                line: last_line,
                column: 1,
                kind: ParseErrorKind::Empty,
            })
        }
        Some(last) if last.opcode != Opcode::Halt => {
            return Err(ParseError {
                line: last_line,
                column: 1,
                kind: ParseErrorKind::MissingHalt,
            })
        }
        Some(_) => {}
    }

    let registers = p.registers.map(|(n, ..)| n).unwrap_or(DEFAULT_REGISTERS);
    if let Some(&(reg, line, column)) = p.reg_refs.iter().find(|(r, ..)| *r >= registers as u32) {
        return Err(ParseError {
            line,
            column,
            kind: ParseErrorKind::RegisterOutOfRange {
                reg,
                count: registers,
            },
        });
    }
    for (index, label, line, column) in p.label_refs {
        let target = *p.labels.get(&label).ok_or(ParseError {
            line,
            column,
            kind: ParseErrorKind::UndefinedLabel(label.clone()),
        })?;
        if let Body::Branch { target: t, .. } = &mut p.instructions[index].body {
            *t = target;
        }
    }

    Ok(Kernel {
        name: p.name.unwrap_or_else(|| "kernel".to_string()),
        params: p.params,
        registers,
        instructions: p.instructions,
        labels: p.labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let k = parse_kernel("mov r0, gid0\nhalt").unwrap();
        assert_eq!(k.instructions.len(), 2);
        assert_eq!(k.name, "kernel");
        assert_eq!(k.registers, DEFAULT_REGISTERS);
    }

    #[test]
    fn undefined_label() {
        let err = parse_kernel("br missing_label, r0\nhalt").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndefinedLabel("missing_label".into()));
        assert_eq!((err.line, err.column), (1, 4));
    }

    #[test]
    fn register_out_of_range_reports_position() {
        let err = parse_kernel(".regs 4\n  mov r4, 1\nhalt").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::RegisterOutOfRange { reg: 4, count: 4 });
        assert_eq!((err.line, err.column), (2, 7));
    }

    #[test]
    fn zero_width_rejected() {
        let err = parse_kernel("add.w0 r0, r1, r2\nhalt").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::ZeroWidth);
        assert_eq!((err.line, err.column), (1, 5));
    }

    #[test]
    fn scalar_only_opcodes_keep_width_one() {
        let err = parse_kernel("barrier.w2\nhalt").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::ScalarOnly(Opcode::Barrier));
    }

    #[test]
    fn must_end_with_halt() {
        let err = parse_kernel("mov r0, 1").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MissingHalt);
        assert_eq!(
            parse_kernel("# nothing\n").unwrap_err().kind,
            ParseErrorKind::Empty
        );
    }

    #[test]
    fn syntax_error_has_column() {
        let err = parse_kernel("add r0 r1, r2\nhalt").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        assert_eq!((err.line, err.column), (1, 8));
    }

    #[test]
    fn affine_address_terms() {
        let k = parse_kernel(".params n\nload r1, [0x100 + 4*gid0 - r2*2 + n]\nhalt").unwrap();
        let expr = k.instructions[0].addr_expr().unwrap();
        assert_eq!(expr.constant, 0x100);
        assert_eq!(
            expr.terms,
            vec![
                (4, Operand::Builtin(Builtin::GlobalId(0))),
                (-2, Operand::Reg(2)),
                (1, Operand::Param(0)),
            ]
        );
    }

    #[test]
    fn labels_resolve_forward_and_backward() {
        let src = "top: add r0, r0, 1\n cmp.lt r1, r0, 4\n br top, r1\n br end\nend:\n halt";
        let k = parse_kernel(src).unwrap();
        assert_eq!(k.labels["top"], 0);
        assert_eq!(k.labels["end"], 4);
        assert!(matches!(k.instructions[2].body, Body::Branch { target: 0, .. }));
        assert!(matches!(
            k.instructions[3].body,
            Body::Branch {
                target: 4,
                cond: None
            }
        ));
    }

    #[test]
    fn unknown_param_and_opcode() {
        assert_eq!(
            parse_kernel("mov r0, n\nhalt").unwrap_err().kind,
            ParseErrorKind::UnknownParam("n".into())
        );
        assert_eq!(
            parse_kernel("jmp x\nhalt").unwrap_err().kind,
            ParseErrorKind::UnknownOpcode("jmp".into())
        );
    }

    #[test]
    fn duplicate_and_dangling_labels() {
        assert_eq!(
            parse_kernel("a: halt\na: halt").unwrap_err().kind,
            ParseErrorKind::DuplicateLabel("a".into())
        );
        assert_eq!(
            parse_kernel("halt\nend:").unwrap_err().kind,
            ParseErrorKind::DanglingLabel("end".into())
        );
    }
}
