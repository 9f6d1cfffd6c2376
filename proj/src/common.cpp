#include "neuvis/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <locale>
#include <sstream>

#include "neuvis/errors.hpp"

namespace neuvis {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::uint64_t hash_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + p.string());
  Hasher h;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h.bytes(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_int: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::gaussian() {
  // Box-Muller; u1 in (0,1] to avoid log(0)
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Mat Rng::gaussian_mat(Eigen::Index rows, Eigen::Index cols, double sigma) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sigma * gaussian();
  return m;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw DataError("empty numeric field");
  std::istringstream iss(t);
  iss.imbue(std::locale::classic());
  double v = 0.0;
  iss >> v;
  if (!iss) throw DataError("failed to parse number '" + t + "'");
  iss >> std::ws;
  if (!iss.eof()) throw DataError("trailing characters in number '" + t + "'");
  return v;
}

std::int64_t parse_int(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw DataError("empty integer field");
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &pos);
  } catch (const std::exception&) {
    throw DataError("failed to parse integer '" + t + "'");
  }
  if (pos != t.size()) throw DataError("trailing characters in integer '" + t + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  const std::string t = to_lower(trim(s));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw DataError("failed to parse boolean '" + s + "'");
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return std::string(buf);
}

KvList read_kv_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open key-value file: " + p.string());
  KvList kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError("malformed line in " + p.string() + ": '" + t + "'");
    kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

void write_kv_file(const std::filesystem::path& p, const KvList& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) {
    if (v.find('\n') != std::string::npos)
      throw DataError("key-value entry '" + k + "' contains a newline");
    out << k << "=" << v << "\n";
  }
  write_file_atomic(p, out.str());
}

const std::string* kv_find(const KvList& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return &v;
  return nullptr;
}

const std::string& kv_get(const KvList& kv, const std::string& key) {
  const std::string* v = kv_find(kv, key);
  if (!v) throw DataError("missing key '" + key + "'");
  return *v;
}

void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("short write: " + tmp.string());
  }
  fs::rename(tmp, p);
}

}  // namespace neuvis
