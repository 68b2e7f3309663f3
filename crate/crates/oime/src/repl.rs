//! Line-oriented interactive session.
//!
//! Type pinyin to convert. Then `1`-`5` picks from the current page, `n`/`p`
//! pages, any other hanzi text is taken as a typed correction, and an empty
//! line cancels. `:q` quits.

use std::io::{BufRead, Write};

use oime_core::engine::{Conversion, Engine};

use crate::error::{AppError, Result};
use crate::service::{parse_input, PAGE_SIZE};

fn show_page(out: &mut impl Write, conv: &Conversion, page: usize) -> std::io::Result<()> {
    let start = page * PAGE_SIZE;
    let items: Vec<String> = conv.shown.iter().skip(start).take(PAGE_SIZE).enumerate().map(|(i, c)| format!("{}.{}", i + 1, c.text)).collect();
    let pages = conv.shown.len().div_ceil(PAGE_SIZE).max(1);
    writeln!(out, "  {}  [{}/{}]", items.join("  "), page + 1, pages)
}

fn io_err(e: std::io::Error) -> AppError {
    AppError::Runtime(format!("terminal: {e}"))
}

/// Runs until end of input or `:q`.
pub fn run(engine: &mut Engine, input: impl BufRead, mut out: impl Write) -> Result<()> {
    let mut pending: Option<(Conversion, usize)> = None;
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line == ":q" {
            break;
        }
        if let Some((conv, page)) = pending.take() {
            let pages = conv.shown.len().div_ceil(PAGE_SIZE).max(1);
            let chosen = match line {
                "" => {
                    writeln!(out, "  cancelled").map_err(io_err)?;
                    continue;
                }
                "n" | "p" => {
                    let page = if line == "n" { (page + 1).min(pages - 1) } else { page.saturating_sub(1) };
                    show_page(&mut out, &conv, page).map_err(io_err)?;
                    pending = Some((conv, page));
                    continue;
                }
                d if d.len() == 1 && d.as_bytes()[0].is_ascii_digit() => {
                    let k = (d.as_bytes()[0] - b'0') as usize;
                    match conv.shown.get(page * PAGE_SIZE + k.wrapping_sub(1)).filter(|_| (1..=PAGE_SIZE).contains(&k)) {
                        Some(c) => c.text.clone(),
                        None => {
                            writeln!(out, "  no candidate {k} on this page").map_err(io_err)?;
                            pending = Some((conv, page));
                            continue;
                        }
                    }
                }
                typed => typed.to_string(),
            };
            match engine.submit_choice(&conv, &chosen) {
                Ok(turn) => {
                    let added: Vec<&str> = turn.update.added.iter().map(|e| e.hanzi.as_str()).collect();
                    write!(out, "  => {chosen}").map_err(io_err)?;
                    if !added.is_empty() {
                        write!(out, "  (learned {})", added.join(" ")).map_err(io_err)?;
                    }
                    if turn.flushed {
                        write!(out, "  (model updated)").map_err(io_err)?;
                    }
                    writeln!(out).map_err(io_err)?;
                }
                Err(e) => {
                    writeln!(out, "  {e}").map_err(io_err)?;
                    pending = Some((conv, page));
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        match parse_input(line).and_then(|i| engine.convert(&i)) {
            Ok(conv) => {
                show_page(&mut out, &conv, 0).map_err(io_err)?;
                pending = Some((conv, 0));
            }
            Err(e) => writeln!(out, "  {e}").map_err(io_err)?,
        }
    }
    Ok(())
}
