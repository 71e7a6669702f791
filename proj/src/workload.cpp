#include "reptfd/workload.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

namespace reptfd {

const char* to_string(InstKind k) {
    switch (k) {
        case InstKind::Load: return "LOAD";
        case InstKind::Store: return "STORE";
        case InstKind::Alu: return "ALU";
    }
    return "?";
}

}  // namespace reptfd

namespace reptfd::workload {

Word ValueFn::apply(Word acc, Word operand) const {
    switch (op) {
        case ValueOp::Add: return acc + operand;
        case ValueOp::Xor: return acc ^ operand;
        case ValueOp::Mul: return acc * (operand | 1u);
        case ValueOp::Rotl: return std::rotl(acc, static_cast<int>(operand & 31u)) + 0x9e3779b9u;
    }
    return acc;
}

Word initial_acc(CoreId thread) { return 0x9e3779b9u * (thread + 1); }

Word execute(const InstructionTemplate& inst, Word& acc, Word operand) {
    switch (inst.kind) {
        case InstKind::Load:
            // Every bit of the loaded word enters the accumulator; rotating
            // first keeps repeated identical operands from cancelling.
            acc = inst.fn.apply(std::rotl(acc, 7) ^ operand, inst.fn.imm);
            return operand;
        case InstKind::Store:
            return inst.fn.apply(acc, inst.fn.imm);
        case InstKind::Alu:
            acc = inst.fn.apply(acc, inst.fn.imm);
            return acc;
    }
    return 0;
}

uint64_t Program::total_instructions() const {
    uint64_t n = 0;
    for (const auto& t : threads) n += t.size();
    return n;
}

std::vector<Addr> Program::footprint() const {
    std::vector<Addr> out;
    for (const auto& t : threads)
        for (const auto& inst : t)
            if (is_memory(inst.kind)) out.push_back(inst.addr.resolve());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void WorkloadParams::validate() const {
    auto ratio_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (num_threads < 1 || num_threads > 32) throw ConfigError("num_threads must be in [1, 32]");
    if (shared_pool_size < 1 || shared_pool_size > kPoolLimit - kPoolBase)
        throw ConfigError("shared_pool_size must be in [1, 32768]");
    if (private_words < 1 || private_words > kPrivateStride)
        throw ConfigError("private_words must be in [1, 2048]");
    if (!ratio_ok(share_ratio) || !ratio_ok(write_ratio) || !ratio_ok(mem_ratio))
        throw ConfigError("ratios must lie in [0, 1]");
}

Program generate(const WorkloadParams& params) {
    params.validate();
    Program prog;
    prog.threads.resize(params.num_threads);
    for (uint32_t t = 0; t < params.num_threads; ++t) {
        std::mt19937_64 rng(mix3(params.seed, t, 0x5eed));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto& thread = prog.threads[t];
        thread.reserve(params.insts_per_thread);
        for (uint32_t i = 0; i < params.insts_per_thread; ++i) {
            InstructionTemplate inst;
            inst.fn.op = static_cast<ValueOp>(rng() % 4);
            inst.fn.imm = static_cast<Word>(rng());
            if (unit(rng) < params.mem_ratio) {
                inst.kind = unit(rng) < params.write_ratio ? InstKind::Store : InstKind::Load;
                if (unit(rng) < params.share_ratio) {
                    inst.addr = {AddrRule::Kind::Pool, static_cast<uint32_t>(rng() % params.shared_pool_size)};
                } else {
                    // Skewed toward the low end of the private region for locality.
                    auto span = static_cast<double>(params.private_words);
                    auto off = static_cast<uint32_t>(span * unit(rng) * unit(rng));
                    off = std::min(off, params.private_words - 1);
                    inst.addr = {AddrRule::Kind::Fixed, kPrivateBase + t * kPrivateStride + off};
                }
            } else {
                inst.kind = InstKind::Alu;
            }
            thread.push_back(inst);
        }
    }
    return prog;
}

namespace {

const char* op_name(ValueOp op) {
    switch (op) {
        case ValueOp::Add: return "add";
        case ValueOp::Xor: return "xor";
        case ValueOp::Mul: return "mul";
        case ValueOp::Rotl: return "rotl";
    }
    return "?";
}

std::string hex(uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", v);
    return buf;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_u32(std::string_view s, uint32_t& out) {
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
    return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::string serialize(const Program& program) {
    std::ostringstream os;
    os << "threads=" << program.threads.size() << '\n';
    for (std::size_t t = 0; t < program.threads.size(); ++t) {
        for (const auto& inst : program.threads[t]) {
            os << 'T' << t << ' ' << to_string(inst.kind) << ' ';
            switch (inst.addr.kind) {
                case AddrRule::Kind::None: os << '-'; break;
                case AddrRule::Kind::Fixed: os << '@' << hex(inst.addr.value); break;
                case AddrRule::Kind::Pool: os << 'P' << inst.addr.value; break;
            }
            os << ' ' << op_name(inst.fn.op) << ':' << hex(inst.fn.imm) << '\n';
        }
    }
    return os.str();
}

Program parse(std::string_view text) {
    Program prog;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        bool terminated = nl != std::string_view::npos;
        std::string_view line = text.substr(pos, terminated ? nl - pos : std::string_view::npos);
        pos = terminated ? nl + 1 : text.size();
        ++line_no;
        auto tok = split_ws(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (!terminated) throw ParseError("truncated line (missing newline)", line_no);

        if (!have_header) {
            uint32_t n = 0;
            if (tok.size() != 1 || !tok[0].starts_with("threads=") || !parse_u32(tok[0].substr(8), n))
                throw ParseError("expected header threads=<n>", line_no);
            prog.threads.resize(n);
            have_header = true;
            continue;
        }
        if (tok.size() != 4) throw ParseError("expected 4 fields", line_no);

        uint32_t t = 0;
        if (tok[0].size() < 2 || tok[0][0] != 'T' || !parse_u32(tok[0].substr(1), t))
            throw ParseError("bad thread id", line_no);
        if (t >= prog.threads.size()) throw ParseError("thread id out of range", line_no);

        InstructionTemplate inst;
        if (tok[1] == "LOAD") inst.kind = InstKind::Load;
        else if (tok[1] == "STORE") inst.kind = InstKind::Store;
        else if (tok[1] == "ALU") inst.kind = InstKind::Alu;
        else throw ParseError("bad instruction kind", line_no);

        auto rule = tok[2];
        if (rule == "-") {
            inst.addr = {};
        } else if (rule.size() > 1 && rule[0] == '@' && parse_u32(rule.substr(1), inst.addr.value)) {
            inst.addr.kind = AddrRule::Kind::Fixed;
        } else if (rule.size() > 1 && rule[0] == 'P' && parse_u32(rule.substr(1), inst.addr.value)) {
            inst.addr.kind = AddrRule::Kind::Pool;
        } else {
            throw ParseError("bad address rule", line_no);
        }
        if (is_memory(inst.kind) == (inst.addr.kind == AddrRule::Kind::None))
            throw ParseError("address rule does not match instruction kind", line_no);

        auto fn = tok[3];
        auto colon = fn.find(':');
        if (colon == std::string_view::npos || !parse_u32(fn.substr(colon + 1), inst.fn.imm))
            throw ParseError("bad value function", line_no);
        auto name = fn.substr(0, colon);
        if (name == "add") inst.fn.op = ValueOp::Add;
        else if (name == "xor") inst.fn.op = ValueOp::Xor;
        else if (name == "mul") inst.fn.op = ValueOp::Mul;
        else if (name == "rotl") inst.fn.op = ValueOp::Rotl;
        else throw ParseError("unknown value op", line_no);

        prog.threads[t].push_back(inst);
    }
    if (!have_header) throw ParseError("missing header", line_no);
    return prog;
}

void save(const Program& program, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << serialize(program);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Program load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

OracleResult oracle_execute(const Program& program, std::span<const OrderEdge> order) {
    const std::size_t n = program.threads.size();
    std::vector<std::vector<uint32_t>> mem_count(n);
    // Predecessors per destination memory instruction.
    std::map<MemRef, std::vector<MemRef>> preds;
    std::vector<uint32_t> mem_total(n, 0);
    for (std::size_t t = 0; t < n; ++t)
        for (const auto& inst : program.threads[t])
            if (is_memory(inst.kind)) ++mem_total[t];
    for (const auto& e : order) {
        if (e.src.core >= n || e.dst.core >= n || e.src.mem_idx >= mem_total[e.src.core] ||
            e.dst.mem_idx >= mem_total[e.dst.core])
            throw ConfigError("order edge references a missing instruction");
        preds[e.dst].push_back(e.src);
    }

    OracleResult out;
    out.results.resize(n);
    std::map<Addr, Word> memory;
    for (Addr a : program.footprint()) memory[a] = 0;

    std::vector<std::size_t> pc(n, 0);
    std::vector<uint32_t> done_mem(n, 0);
    std::vector<Word> acc(n);
    for (std::size_t t = 0; t < n; ++t) acc[t] = initial_acc(static_cast<CoreId>(t));

    auto ready = [&](std::size_t t) {
        const auto& inst = program.threads[t][pc[t]];
        if (!is_memory(inst.kind)) return true;
        auto it = preds.find(MemRef{static_cast<CoreId>(t), done_mem[t]});
        if (it == preds.end()) return true;
        for (const auto& p : it->second)
            if (done_mem[p.core] <= p.mem_idx) return false;
        return true;
    };

    std::size_t remaining = program.total_instructions();
    while (remaining > 0) {
        bool progressed = false;
        for (std::size_t t = 0; t < n; ++t) {
            if (pc[t] >= program.threads[t].size() || !ready(t)) continue;
            const auto& inst = program.threads[t][pc[t]];
            Word operand = 0;
            if (inst.kind == InstKind::Load) operand = memory[inst.addr.resolve()];
            Word r = execute(inst, acc[t], operand);
            if (inst.kind == InstKind::Store) memory[inst.addr.resolve()] = r;
            if (is_memory(inst.kind)) ++done_mem[t];
            out.results[t].push_back(r);
            ++pc[t];
            --remaining;
            progressed = true;
            break;  // restart from the lowest thread id
        }
        if (!progressed) throw ConfigError("conflict order is cyclic with program order");
    }
    out.memory = std::move(memory);
    return out;
}

}  // namespace reptfd::workload
