#!/usr/bin/env python3
"""Records the system calls made by each runnable fixture.

Runs every fixture binary under ptrace and writes traces/<name>.trace in the
usual tracer text format (one `name(...) = ret` line per call). These files
are the ground truth the analysis is scored against.
"""
import ctypes
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
TABLE = os.path.join(HERE, "..", "data", "syscalls-x86_64-linux-6.10.tsv")

PTRACE_TRACEME = 0
PTRACE_SYSCALL = 24
PTRACE_GETREGS = 12
PTRACE_SETOPTIONS = 0x4200
PTRACE_O_TRACESYSGOOD = 1

REG_NAMES = ("r15 r14 r13 r12 rbp rbx r11 r10 r9 r8 rax rcx rdx rsi rdi orig_rax "
             "rip cs eflags rsp ss fs_base gs_base ds es fs gs").split()


class Regs(ctypes.Structure):
    _fields_ = [(n, ctypes.c_ulonglong) for n in REG_NAMES]


def load_names():
    names = {}
    with open(TABLE) as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            nr, name = line.split()
            names[int(nr)] = name
    return names


def trace(path, env):
    libc = ctypes.CDLL(None, use_errno=True)
    pid = os.fork()
    if pid == 0:
        libc.ptrace(PTRACE_TRACEME, 0, None, None)
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, 1)
        os.execve(path, [path], env)
    os.waitpid(pid, 0)
    libc.ptrace(PTRACE_SETOPTIONS, pid, None, PTRACE_O_TRACESYSGOOD)
    calls = []
    entering = True
    while True:
        libc.ptrace(PTRACE_SYSCALL, pid, None, None)
        _, status = os.waitpid(pid, 0)
        if os.WIFEXITED(status) or os.WIFSIGNALED(status):
            break
        regs = Regs()
        libc.ptrace(PTRACE_GETREGS, pid, None, ctypes.byref(regs))
        if entering:
            calls.append([regs.orig_rax, "?"])
        else:
            ret = ctypes.c_longlong(regs.rax).value
            calls[-1][1] = str(ret)
        entering = not entering
    return calls


def main():
    names = load_names()
    bindir = os.path.join(HERE, "bin")
    outdir = os.path.join(HERE, "traces")
    os.makedirs(outdir, exist_ok=True)
    targets = sys.argv[1:] or sorted(
        f for f in os.listdir(bindir) if not f.endswith(".so"))
    for name in targets:
        env = {"LD_LIBRARY_PATH": bindir, "LD_BIND_NOW": ""}
        calls = trace(os.path.join(bindir, name), env)
        with open(os.path.join(outdir, name + ".trace"), "w") as f:
            for nr, ret in calls:
                f.write("%s(...) = %s\n" % (names.get(nr, "syscall_%d" % nr), ret))
        print(name, sorted({nr for nr, _ in calls}))


if __name__ == "__main__":
    main()
