//! ELF64 x86-64 loading: segments, code ranges, symbols, dynamic metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use goblin::elf::{dynamic, header, program_header, reloc, section_header, sym, Elf};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decoder::{Flow, IcedDecoder, InstructionDecoder, Operand};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: not an ELF file")]
    NotElf { path: String },
    #[error("{path}: unsupported binary: {detail}")]
    UnsupportedClass { path: String, detail: String },
    #[error("{path}: malformed headers: {detail}")]
    MalformedHeaders { path: String, detail: String },
    #[error("{path}: no executable segment")]
    NoCodeSegment { path: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryKind {
    /// Statically linked executable (including static-pie).
    StaticExec,
    /// Position-independent executable with an interpreter.
    PieExec,
    /// Non-PIE executable with an interpreter.
    DynamicExec,
    SharedObject,
}

impl BinaryKind {
    pub fn is_executable(self) -> bool {
        self != BinaryKind::SharedObject
    }

    pub fn is_dynamic_exec(self) -> bool {
        matches!(self, BinaryKind::PieExec | BinaryKind::DynamicExec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeRange {
    pub start: u64,
    pub len: u64,
}

impl CodeRange {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.start && addr < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolDef {
    pub name: String,
    pub address: u64,
    pub size: u64,
    pub is_function: bool,
    pub is_exported: bool,
    /// GNU indirect function: `address` is the resolver.
    pub is_ifunc: bool,
    /// Version tag split off a `name@VERSION` symbol.
    pub version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    vaddr: u64,
    data: Vec<u8>,
}

/// A loaded, immutable ELF image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub path: String,
    pub kind: BinaryKind,
    pub entry_point: u64,
    /// Sorted, non-overlapping executable ranges.
    pub code_ranges: Vec<CodeRange>,
    segments: Vec<Segment>,
    pub symbols: Vec<SymbolDef>,
    /// DT_NEEDED entries in link order.
    pub dyn_deps: Vec<String>,
    pub soname: Option<String>,
    pub interpreter: Option<String>,
    /// Import name → PLT stub address.
    pub plt_map: BTreeMap<String, u64>,
    /// PLT stub address → import name.
    pub plt_stubs: BTreeMap<u64, String>,
    /// GOT slot → import name (jump slots and GLOB_DAT function slots).
    pub got_imports: BTreeMap<u64, String>,
    /// Imports referenced through GLOB_DAT slots: their address is taken
    /// rather than (only) called through the PLT.
    pub data_imports: BTreeSet<String>,
    /// Exported function name → address (default visibility, defined).
    pub exported: BTreeMap<String, u64>,
    /// Undefined dynamic symbols.
    pub imports: BTreeSet<String>,
    /// Undefined weak dynamic symbols (may legitimately stay unresolved).
    pub weak_imports: BTreeSet<String>,
    /// Functions run by the loader or libc outside normal calls: DT_INIT,
    /// DT_FINI, init/fini arrays, .init/.fini sections, IRELATIVE resolvers.
    pub init_functions: Vec<u64>,
    /// Function ranges from .eh_frame FDEs.
    pub unwind_ranges: Vec<(u64, u64)>,
    /// Leading 64 bits of the SHA-256 of the file bytes.
    pub content_hash: u64,
}

const DF_1_PIE: u64 = 0x0800_0000;
const R_X86_64_GLOB_DAT: u32 = 6;
const R_X86_64_JUMP_SLOT: u32 = 7;
const R_X86_64_RELATIVE: u32 = 8;
const R_X86_64_IRELATIVE: u32 = 37;

/// Reads and parses an ELF file.
pub fn load_binary(path: impl AsRef<Path>) -> Result<BinaryImage, LoadError> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: label.clone(),
        source,
    })?;
    BinaryImage::parse(&label, &bytes)
}

/// Entry points of the analysis: the ELF entry for executables, every
/// exported function for shared objects (ascending, deduplicated).
pub fn list_entry_points(img: &BinaryImage) -> Vec<u64> {
    if img.kind.is_executable() {
        vec![img.entry_point]
    } else {
        let set: BTreeSet<u64> = img.exported.values().copied().collect();
        set.into_iter().collect()
    }
}

impl BinaryImage {
    pub fn parse(path: &str, bytes: &[u8]) -> Result<BinaryImage, LoadError> {
        let malformed = |detail: String| LoadError::MalformedHeaders {
            path: path.to_string(),
            detail,
        };
        if bytes.len() < 4 || &bytes[..4] != b"\x7fELF" {
            return Err(LoadError::NotElf { path: path.to_string() });
        }
        if bytes.len() < 6 {
            return Err(malformed("truncated identification".into()));
        }
        if bytes[header::EI_CLASS] != header::ELFCLASS64 {
            return Err(LoadError::UnsupportedClass {
                path: path.to_string(),
                detail: "only ELF64 is supported".into(),
            });
        }
        if bytes[header::EI_DATA] != header::ELFDATA2LSB {
            return Err(LoadError::UnsupportedClass {
                path: path.to_string(),
                detail: "only little-endian ELF is supported".into(),
            });
        }
        let elf = Elf::parse(bytes).map_err(|e| malformed(e.to_string()))?;
        if elf.header.e_machine != header::EM_X86_64 {
            return Err(LoadError::UnsupportedClass {
                path: path.to_string(),
                detail: format!("machine {} is not x86-64", elf.header.e_machine),
            });
        }

        let interpreter = elf.interpreter.map(str::to_string);
        let flags_1 = elf.dynamic.as_ref().map(|d| d.info.flags_1).unwrap_or(0);
        let kind = match elf.header.e_type {
            header::ET_EXEC if interpreter.is_some() => BinaryKind::DynamicExec,
            header::ET_EXEC => BinaryKind::StaticExec,
            header::ET_DYN if interpreter.is_some() => BinaryKind::PieExec,
            header::ET_DYN if flags_1 & DF_1_PIE != 0 => BinaryKind::StaticExec,
            header::ET_DYN => BinaryKind::SharedObject,
            other => {
                return Err(LoadError::UnsupportedClass {
                    path: path.to_string(),
                    detail: format!("object type {other} is not loadable"),
                })
            }
        };

        let mut segments = Vec::new();
        let mut exec_segments = Vec::new();
        for ph in &elf.program_headers {
            if ph.p_type != program_header::PT_LOAD || ph.p_memsz == 0 {
                continue;
            }
            let off = ph.p_offset as usize;
            let filesz = ph.p_filesz as usize;
            let file = off
                .checked_add(filesz)
                .and_then(|end| bytes.get(off..end))
                .ok_or_else(|| malformed(format!("segment at {:#x} exceeds file", ph.p_vaddr)))?;
            if ph.p_memsz > 1 << 32 {
                return Err(malformed(format!("segment at {:#x} is implausibly large", ph.p_vaddr)));
            }
            let mut data = file.to_vec();
            data.resize(ph.p_memsz as usize, 0);
            segments.push(Segment { vaddr: ph.p_vaddr, data });
            if ph.p_flags & program_header::PF_X != 0 {
                exec_segments.push(CodeRange { start: ph.p_vaddr, len: ph.p_memsz });
            }
        }
        segments.sort_by_key(|s| s.vaddr);
        if exec_segments.is_empty() {
            return Err(LoadError::NoCodeSegment { path: path.to_string() });
        }

        // Executable sections give tighter ranges than segments (no headers,
        // no padding); fall back to segments for section-stripped files.
        let mut ranges: Vec<CodeRange> = elf
            .section_headers
            .iter()
            .filter(|sh| {
                sh.sh_flags & u64::from(section_header::SHF_EXECINSTR) != 0
                    && sh.sh_flags & u64::from(section_header::SHF_ALLOC) != 0
                    && sh.sh_type != section_header::SHT_NOBITS
                    && sh.sh_size > 0
            })
            .map(|sh| CodeRange { start: sh.sh_addr, len: sh.sh_size })
            .filter(|r| exec_segments.iter().any(|s| s.contains(r.start) && r.end() <= s.end()))
            .collect();
        if ranges.is_empty() {
            ranges = exec_segments.clone();
        }
        let code_ranges = merge_ranges(ranges);

        let mut img = BinaryImage {
            path: path.to_string(),
            kind,
            entry_point: elf.entry,
            code_ranges,
            segments,
            symbols: Vec::new(),
            dyn_deps: elf.libraries.iter().map(|s| s.to_string()).collect(),
            soname: elf.soname.map(str::to_string),
            interpreter,
            plt_map: BTreeMap::new(),
            plt_stubs: BTreeMap::new(),
            got_imports: BTreeMap::new(),
            data_imports: BTreeSet::new(),
            exported: BTreeMap::new(),
            imports: BTreeSet::new(),
            weak_imports: BTreeSet::new(),
            init_functions: Vec::new(),
            unwind_ranges: Vec::new(),
            content_hash: content_hash(bytes),
        };

        if kind.is_executable() && !img.is_code(img.entry_point) {
            return Err(malformed(format!(
                "entry point {:#x} is outside executable code",
                img.entry_point
            )));
        }

        img.collect_symbols(&elf);
        img.collect_imports(&elf);
        img.collect_init_functions(&elf);
        img.collect_unwind_ranges(&elf, bytes);
        Ok(img)
    }

    fn collect_symbols(&mut self, elf: &Elf<'_>) {
        let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();
        let mut out = Vec::new();
        let tables = [(&elf.dynsyms, &elf.dynstrtab, true), (&elf.syms, &elf.strtab, false)];
        for (table, strtab, dynamic) in tables {
            for s in table.iter() {
                if s.st_shndx == section_header::SHN_UNDEF as usize || s.st_value == 0 {
                    continue;
                }
                let ty = s.st_type();
                if !matches!(ty, sym::STT_FUNC | sym::STT_GNU_IFUNC | sym::STT_OBJECT | sym::STT_NOTYPE) {
                    continue;
                }
                let raw = match strtab.get_at(s.st_name) {
                    Some(n) if !n.is_empty() => n,
                    _ => continue,
                };
                let (name, version) = split_version(raw);
                let bind = s.st_bind();
                // Untyped local labels are jump targets, not functions.
                let is_function = matches!(ty, sym::STT_FUNC | sym::STT_GNU_IFUNC)
                    || (ty == sym::STT_NOTYPE
                        && matches!(bind, sym::STB_GLOBAL | sym::STB_WEAK)
                        && self.is_code(s.st_value));
                let is_exported = dynamic
                    && matches!(ty, sym::STT_FUNC | sym::STT_GNU_IFUNC)
                    && matches!(bind, sym::STB_GLOBAL | sym::STB_WEAK)
                    && s.st_visibility() == sym::STV_DEFAULT
                    && self.is_code(s.st_value);
                if !self.is_mapped(s.st_value) {
                    continue;
                }
                if is_exported {
                    self.exported.entry(name.clone()).or_insert(s.st_value);
                }
                if !seen.insert((name.clone(), s.st_value)) {
                    // The dynamic table entry came first and carries the
                    // export flag; nothing to add.
                    continue;
                }
                out.push(SymbolDef {
                    name,
                    address: s.st_value,
                    size: s.st_size,
                    is_function,
                    is_exported,
                    is_ifunc: ty == sym::STT_GNU_IFUNC,
                    version,
                });
            }
        }
        out.sort_by(|a, b| a.address.cmp(&b.address).then_with(|| a.name.cmp(&b.name)));
        self.symbols = out;
    }

    fn collect_imports(&mut self, elf: &Elf<'_>) {
        for s in elf.dynsyms.iter() {
            if s.st_shndx != section_header::SHN_UNDEF as usize {
                continue;
            }
            let Some(name) = elf.dynstrtab.get_at(s.st_name).filter(|n| !n.is_empty()) else {
                continue;
            };
            let (name, _) = split_version(name);
            if s.st_bind() == sym::STB_WEAK {
                self.weak_imports.insert(name);
            } else {
                self.imports.insert(name);
            }
        }

        let sym_name = |idx: usize| -> Option<String> {
            let s = elf.dynsyms.get(idx)?;
            let n = elf.dynstrtab.get_at(s.st_name)?;
            (!n.is_empty()).then(|| split_version(n).0)
        };
        for r in elf.pltrelocs.iter() {
            if r.r_type == R_X86_64_JUMP_SLOT {
                if let Some(n) = sym_name(r.r_sym) {
                    self.got_imports.insert(r.r_offset, n);
                }
            }
        }
        for r in elf.dynrelas.iter() {
            if r.r_type == R_X86_64_GLOB_DAT {
                if let Some(n) = sym_name(r.r_sym) {
                    self.data_imports.insert(n.clone());
                    self.got_imports.insert(r.r_offset, n);
                }
            }
        }

        // Locate PLT stubs by decoding their `jmp *slot(%rip)` instructions.
        let plt_sections: Vec<CodeRange> = elf
            .section_headers
            .iter()
            .filter(|sh| {
                let name = elf.shdr_strtab.get_at(sh.sh_name).unwrap_or("");
                name.starts_with(".plt") && sh.sh_size > 0
            })
            .map(|sh| CodeRange { start: sh.sh_addr, len: sh.sh_size })
            .collect();
        let decoder = IcedDecoder;
        for sec in plt_sections {
            let mut addr = sec.start;
            while addr < sec.end() {
                let Some(bytes) = self.read(addr, (sec.end() - addr) as usize) else {
                    break;
                };
                let Ok(insn) = decoder.decode(bytes, addr) else {
                    addr += 1;
                    continue;
                };
                if insn.flow == Flow::IndirectJump {
                    if let Some(Operand::Mem(m)) = insn.operands.first() {
                        if let Some(slot) = m.absolute() {
                            if let Some(name) = self.got_imports.get(&slot).cloned() {
                                let stub = sec.start + (insn.addr - sec.start) / 16 * 16;
                                if self.is_code(stub) {
                                    self.plt_map.entry(name.clone()).or_insert(stub);
                                    self.plt_stubs.insert(stub, name);
                                }
                            }
                        }
                    }
                }
                addr = insn.end();
            }
        }
    }

    fn collect_init_functions(&mut self, elf: &Elf<'_>) {
        let mut funcs = BTreeSet::new();
        // Pointers in PIC arrays are zero in the file and filled by RELATIVE
        // relocations.
        let relative: BTreeMap<u64, u64> = elf
            .dynrelas
            .iter()
            .filter(|r| r.r_type == R_X86_64_RELATIVE)
            .filter_map(|r| Some((r.r_offset, r.r_addend? as u64)))
            .collect();
        let pointer_at = |addr: u64| -> Option<u64> {
            let v = self.read_u64(addr)?;
            if v != 0 {
                Some(v)
            } else {
                relative.get(&addr).copied()
            }
        };

        let mut arrays: Vec<(u64, u64)> = Vec::new();
        if let Some(d) = &elf.dynamic {
            for entry in [d.info.init, d.info.fini] {
                if entry != 0 {
                    funcs.insert(entry);
                }
            }
            if d.info.init_array != 0 {
                arrays.push((d.info.init_array, d.info.init_arraysz as u64));
            }
            if d.info.fini_array != 0 {
                arrays.push((d.info.fini_array, d.info.fini_arraysz as u64));
            }
            for dy in &d.dyns {
                if dy.d_tag == dynamic::DT_PREINIT_ARRAY {
                    let size = d
                        .dyns
                        .iter()
                        .find(|x| x.d_tag == dynamic::DT_PREINIT_ARRAYSZ)
                        .map(|x| x.d_val)
                        .unwrap_or(0);
                    arrays.push((dy.d_val, size));
                }
            }
        }
        for sh in &elf.section_headers {
            match section_name(elf, sh) {
                ".init_array" | ".fini_array" | ".preinit_array" => arrays.push((sh.sh_addr, sh.sh_size)),
                ".init" | ".fini" if sh.sh_size > 0 => {
                    funcs.insert(sh.sh_addr);
                }
                _ => {}
            }
        }
        arrays.sort();
        arrays.dedup();
        for (start, size) in arrays {
            for i in 0..size.min(1 << 16) / 8 {
                if let Some(p) = pointer_at(start + i * 8) {
                    funcs.insert(p);
                }
            }
        }

        // IRELATIVE resolvers, from the dynamic table or from section
        // relocations in static executables.
        let mut irelative: Vec<u64> = elf
            .dynrelas
            .iter()
            .chain(elf.pltrelocs.iter())
            .filter(|r| r.r_type == R_X86_64_IRELATIVE)
            .filter_map(|r| r.r_addend.map(|a| a as u64))
            .collect();
        for (_, relocs) in &elf.shdr_relocs {
            irelative.extend(
                relocs
                    .iter()
                    .filter(|r| r.r_type == R_X86_64_IRELATIVE)
                    .filter_map(|r: reloc::Reloc| r.r_addend.map(|a| a as u64)),
            );
        }
        funcs.extend(irelative);
        funcs.retain(|a| self.is_code(*a));
        self.init_functions = funcs.into_iter().collect();
    }

    fn collect_unwind_ranges(
        &mut self,
        elf: &Elf<'_>,
        bytes: &[u8],
    ) {
        use gimli::{BaseAddresses, CieOrFde, EhFrame, LittleEndian, UnwindSection};

        let Some(sh) = elf.section_headers.iter().find(|sh| section_name(elf, sh) == ".eh_frame") else {
            return;
        };
        let off = sh.sh_offset as usize;
        let Some(data) = off.checked_add(sh.sh_size as usize).and_then(|end| bytes.get(off..end)) else {
            return;
        };
        let text = elf
            .section_headers
            .iter()
            .find(|s| section_name(elf, s) == ".text")
            .map(|s| s.sh_addr)
            .unwrap_or(0);
        let eh = EhFrame::new(data, LittleEndian);
        let bases = BaseAddresses::default().set_eh_frame(sh.sh_addr).set_text(text);
        let mut entries = eh.entries(&bases);
        let mut ranges = Vec::new();
        loop {
            match entries.next() {
                Ok(Some(CieOrFde::Fde(partial))) => {
                    if let Ok(fde) = partial.parse(EhFrame::cie_from_offset) {
                        if fde.len() > 0 && self.is_code(fde.initial_address()) {
                            ranges.push((fde.initial_address(), fde.len()));
                        }
                    }
                }
                Ok(Some(CieOrFde::Cie(_))) => {}
                Ok(None) => break,
                Err(e) => {
                    log::debug!("{}: stopping .eh_frame walk: {e}", self.path);
                    break;
                }
            }
        }
        ranges.sort();
        ranges.dedup();
        self.unwind_ranges = ranges;
    }

    pub fn is_code(&self, addr: u64) -> bool {
        self.code_range_of(addr).is_some()
    }

    pub fn code_range_of(&self, addr: u64) -> Option<CodeRange> {
        let idx = self.code_ranges.partition_point(|r| r.start <= addr);
        let r = *self.code_ranges.get(idx.checked_sub(1)?)?;
        r.contains(addr).then_some(r)
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.segment_of(addr).is_some()
    }

    fn segment_of(&self, addr: u64) -> Option<&Segment> {
        let idx = self.segments.partition_point(|s| s.vaddr <= addr);
        let s = self.segments.get(idx.checked_sub(1)?)?;
        (addr - s.vaddr < s.data.len() as u64).then_some(s)
    }

    /// `len` bytes at `addr`, if they lie in one loaded segment.
    pub fn read(&self, addr: u64, len: usize) -> Option<&[u8]> {
        let s = self.segment_of(addr)?;
        let start = (addr - s.vaddr) as usize;
        s.data.get(start..start.checked_add(len)?)
    }

    /// The bytes from `addr` to the end of its code range.
    pub fn code_bytes_from(&self, addr: u64) -> Option<&[u8]> {
        let r = self.code_range_of(addr)?;
        self.read(addr, (r.end() - addr) as usize)
    }

    pub fn read_u64(&self, addr: u64) -> Option<u64> {
        self.read(addr, 8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn read_i32(&self, addr: u64) -> Option<i32> {
        self.read(addr, 4).map(|b| i32::from_le_bytes(b.try_into().unwrap()))
    }

    /// Function symbols, ascending by address, one per address.
    pub fn function_starts(&self) -> Vec<u64> {
        let set: BTreeSet<u64> = self
            .symbols
            .iter()
            .filter(|s| s.is_function && self.is_code(s.address))
            .map(|s| s.address)
            .collect();
        set.into_iter().collect()
    }

    /// Preferred symbol name for an address: exported first, then any.
    pub fn symbol_name(&self, addr: u64) -> Option<&str> {
        let mut candidates = self.symbols.iter().filter(|s| s.address == addr && s.is_function);
        let first = candidates.next()?;
        let best = std::iter::once(first)
            .chain(candidates)
            .find(|s| s.is_exported)
            .unwrap_or(first);
        Some(best.name.as_str())
    }

    /// Name this image is referred to by in DT_NEEDED lists.
    pub fn lib_name(&self) -> String {
        if let Some(s) = &self.soname {
            return s.clone();
        }
        Path::new(&self.path)
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.clone())
    }

    pub fn ifunc_exports(&self) -> impl Iterator<Item = &SymbolDef> {
        self.symbols.iter().filter(|s| s.is_exported && s.is_ifunc)
    }
}

fn section_name<'a>(elf: &Elf<'a>, sh: &section_header::SectionHeader) -> &'a str {
    elf.shdr_strtab.get_at(sh.sh_name).unwrap_or("")
}

fn split_version(raw: &str) -> (String, Option<String>) {
    match raw.find('@') {
        Some(i) => {
            let version = raw[i..].trim_start_matches('@');
            (raw[..i].to_string(), (!version.is_empty()).then(|| version.to_string()))
        }
        None => (raw.to_string(), None),
    }
}

fn merge_ranges(mut ranges: Vec<CodeRange>) -> Vec<CodeRange> {
    ranges.sort();
    let mut out: Vec<CodeRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start <= last.end() => {
                let end = last.end().max(r.end());
                last.len = end - last.start;
            }
            _ => out.push(r),
        }
    }
    out
}

pub fn content_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_ranges_joins_adjacent_and_overlapping() {
        let r = merge_ranges(vec![
            CodeRange { start: 0x20, len: 0x10 },
            CodeRange { start: 0x10, len: 0x10 },
            CodeRange { start: 0x28, len: 0x4 },
            CodeRange { start: 0x40, len: 0x8 },
        ]);
        assert_eq!(r, vec![CodeRange { start: 0x10, len: 0x20 }, CodeRange { start: 0x40, len: 0x8 }]);
    }

    #[test]
    fn version_suffixes_are_split() {
        assert_eq!(split_version("memcpy@@GLIBC_2.14"), ("memcpy".into(), Some("GLIBC_2.14".into())));
        assert_eq!(split_version("read"), ("read".into(), None));
    }

    #[test]
    fn rejects_non_elf_and_truncated_input() {
        assert!(matches!(BinaryImage::parse("x", b"hello"), Err(LoadError::NotElf { .. })));
        let mut head = b"\x7fELF\x02\x01\x01".to_vec();
        head.resize(16, 0);
        assert!(matches!(BinaryImage::parse("x", &head), Err(LoadError::MalformedHeaders { .. })));
        let mut class32 = b"\x7fELF\x01\x01\x01".to_vec();
        class32.resize(64, 0);
        assert!(matches!(BinaryImage::parse("x", &class32), Err(LoadError::UnsupportedClass { .. })));
    }
}
