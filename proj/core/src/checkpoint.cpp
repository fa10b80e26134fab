#include "banditmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace banditmt {
namespace {

static_assert(sizeof(Real) == 8, "checkpoint payloads are float64");

void write_vocab(std::ostream& out, const char* side, const Vocabulary& v) {
  out << "vocab " << side << ' ' << v.size() << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) out << v.token(static_cast<TokenId>(i)) << '\n';
}

std::string expect_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint " + path.string() + ": truncated header");
  return line;
}

Vocabulary read_vocab(std::istream& in, const std::filesystem::path& path, const std::string& side) {
  std::istringstream header(expect_line(in, path));
  std::string tag, got_side;
  std::size_t n = 0;
  header >> tag >> got_side >> n;
  if (tag != "vocab" || got_side != side) throw std::runtime_error("checkpoint " + path.string() + ": expected " + side + " vocabulary");
  Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) {
    std::string token = expect_line(in, path);
    if (i < Vocabulary::kReserved) {
      if (v.token(static_cast<TokenId>(i)) != token)
        throw std::runtime_error("checkpoint " + path.string() + ": reserved token mismatch");
      continue;
    }
    if (v.add(token) != i) throw std::runtime_error("checkpoint " + path.string() + ": duplicate vocabulary entry");
  }
  return v;
}

void write_le(std::ostream& out, Real value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

Real read_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<Real>(bits);
}

}  // namespace

const EncoderDecoder& Checkpoint::network() const {
  return std::visit([](const auto& m) -> const EncoderDecoder& { return m; }, model);
}

const NmtParams& Checkpoint::policy() const {
  if (const auto* p = std::get_if<NmtParams>(&model)) return *p;
  throw std::runtime_error("checkpoint holds a critic, not a translation model");
}

const CriticParams& Checkpoint::critic() const {
  if (const auto* p = std::get_if<CriticParams>(&model)) return *p;
  throw std::runtime_error("checkpoint holds a translation model, not a critic");
}

void save_checkpoint(const std::filesystem::path& path, const EncoderDecoder& net, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const ModelDims& d = net.dims();
  out << kCheckpointVersion << '\n';
  out << "head " << (net.head() == HeadKind::kPolicy ? "policy" : "value") << '\n';
  out << "dims " << d.src_vocab << ' ' << d.tgt_vocab << ' ' << d.embed << ' ' << d.hidden << ' ' << d.layers << '\n';
  write_vocab(out, "src", source_vocab);
  write_vocab(out, "tgt", target_vocab);
  const ParamSet& params = net.params();
  out << "tensors " << params.size() << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params.value(i).shape();
    out << params.name(i) << " f64 " << s.rank();
    for (std::size_t dim : s.dims()) out << ' ' << dim;
    out << '\n';
  }
  out << "payload\n";
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Real v : params.value(i).data()) write_le(out, v);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  if (expect_line(in, path) != kCheckpointVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version tag");

  std::string head_line = expect_line(in, path);
  HeadKind head;
  if (head_line == "head policy") head = HeadKind::kPolicy;
  else if (head_line == "head value") head = HeadKind::kValue;
  else throw std::runtime_error("checkpoint " + path.string() + ": bad head line");

  ModelDims dims;
  {
    std::istringstream line(expect_line(in, path));
    std::string tag;
    line >> tag >> dims.src_vocab >> dims.tgt_vocab >> dims.embed >> dims.hidden >> dims.layers;
    if (tag != "dims" || !line) throw std::runtime_error("checkpoint " + path.string() + ": bad dims line");
  }
  Vocabulary src = read_vocab(in, path, "src");
  Vocabulary tgt = read_vocab(in, path, "tgt");

  Checkpoint ckpt{head == HeadKind::kPolicy ? std::variant<NmtParams, CriticParams>(NmtParams(dims))
                                            : std::variant<NmtParams, CriticParams>(CriticParams(dims)),
                  std::move(src), std::move(tgt)};
  ParamSet& params = std::visit([](auto& m) -> ParamSet& { return m.params(); }, ckpt.model);

  std::size_t count = 0;
  {
    std::istringstream line(expect_line(in, path));
    std::string tag;
    line >> tag >> count;
    if (tag != "tensors" || count != params.size())
      throw std::runtime_error("checkpoint " + path.string() + ": tensor count does not match architecture");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream line(expect_line(in, path));
    std::string name, dtype;
    std::size_t rank = 0;
    line >> name >> dtype >> rank;
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) line >> d;
    if (!line || dtype != "f64") throw std::runtime_error("checkpoint " + path.string() + ": bad tensor line");
    if (name != params.name(i) || !(Shape(shape) == params.value(i).shape()))
      throw std::runtime_error("checkpoint " + path.string() + ": tensor " + name + " does not match architecture");
  }
  if (expect_line(in, path) != "payload") throw std::runtime_error("checkpoint " + path.string() + ": missing payload");
  for (std::size_t i = 0; i < count; ++i)
    for (Real& v : params.value(i).data()) v = read_le(in);
  return ckpt;
}

}  // namespace banditmt
