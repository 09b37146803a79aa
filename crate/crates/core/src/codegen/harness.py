# Child-side harness for generated Python.
# Reads one JSON request per line on stdin: {"entry": name, "args": {...}}
# and answers each with {"ok": true, "result": ...} or {"ok": false, "error": text}.
import json
import os
import sys
import typing

SCRATCH = os.path.realpath(sys.argv[1])
MODULE = sys.argv[2]

proto = sys.stdout
sys.stdout = sys.stderr

with open(MODULE, encoding="utf-8") as f:
    SOURCE = f.read()

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC
_PATH_EVENTS = {
    "os.remove", "os.rmdir", "os.mkdir", "os.chmod", "os.chown", "os.truncate",
    "os.utime", "os.chflags", "os.lchflags", "os.setxattr", "os.removexattr",
    "shutil.rmtree", "shutil.copyfile", "shutil.copymode", "shutil.copystat",
    "shutil.chown",
}
_PAIR_EVENTS = {"os.rename", "os.link", "os.symlink", "shutil.move"}
_DENIED = {
    "subprocess.Popen", "os.system", "os.exec", "os.posix_spawn", "os.spawn",
    "os.fork", "os.forkpty", "os.kill", "os.killpg", "pty.spawn",
    "socket.connect", "socket.bind", "socket.sendto", "ctypes.dlopen",
    "sys.addaudithook",
}


def _inside(path):
    if isinstance(path, int):
        return True
    p = os.path.realpath(os.fsdecode(path))
    return p == SCRATCH or p.startswith(SCRATCH + os.sep)


def _guard(event, args):
    if event == "open":
        path, mode, flags = args
        writing = bool(mode and any(c in mode for c in "wax+")) or bool((flags or 0) & _WRITE_FLAGS)
        if writing and path is not None and not _inside(path):
            raise PermissionError(f"sandbox: write outside scratch directory: {path}")
    elif event in _PATH_EVENTS:
        if args and not _inside(args[0]):
            raise PermissionError(f"sandbox: {event} outside scratch directory")
    elif event in _PAIR_EVENTS:
        if not all(_inside(a) for a in args[:2] if isinstance(a, (str, bytes, os.PathLike))):
            raise PermissionError(f"sandbox: {event} outside scratch directory")
    elif event in _DENIED:
        raise PermissionError(f"sandbox: {event} is not permitted")


sys.addaudithook(_guard)


def _describe(e):
    return f"{type(e).__name__}: {e}"


namespace = {"__name__": "askit_generated", "Literal": typing.Literal, "Any": typing.Any}
load_error = None
try:
    exec(compile(SOURCE, MODULE, "exec"), namespace)
except BaseException as e:  # noqa: BLE001
    load_error = e


def _handle(line):
    if load_error is not None:
        raise load_error
    req = json.loads(line)
    fn = namespace.get(req["entry"])
    if not callable(fn):
        raise NameError(f"entry {req['entry']} is not a function")
    return fn(**req["args"])


for line in sys.stdin:
    if not line.strip():
        continue
    try:
        reply = json.dumps({"ok": True, "result": _handle(line)}, allow_nan=False, ensure_ascii=False, separators=(",", ":"))
    except BaseException as e:  # noqa: BLE001
        reply = json.dumps({"ok": False, "error": _describe(e)}, ensure_ascii=False, separators=(",", ":"))
    proto.write(reply + "\n")
    proto.flush()
