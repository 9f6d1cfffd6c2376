#include "neuvis/dataset_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

namespace fs = std::filesystem;

namespace neuvis {

namespace {

void save_catalog(const std::vector<StimulusRecord>& catalog,
                  const std::string& path) {
  std::ostringstream out;
  out << "image_id\tcategory_id\timage_ref\tcoarse_text\tfine_text\n";
  for (const auto& s : catalog) {
    for (const std::string* f : {&s.image_ref, &s.coarse_text, &s.fine_text})
      if (f->find_first_of("\t\n") != std::string::npos)
        throw DataError("catalog text fields must not contain tabs or newlines");
    out << s.image_id << "\t" << s.category_id << "\t" << s.image_ref << "\t"
        << s.coarse_text << "\t" << s.fine_text << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<StimulusRecord> load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog: " + path);
  std::vector<StimulusRecord> catalog;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (header) {
      header = false;
      if (cols.size() != 5 || cols[0] != "image_id")
        throw DataError("bad catalog header in " + path);
      continue;
    }
    if (cols.size() != 5)
      throw DataError("catalog row has " + std::to_string(cols.size()) +
                      " columns, expected 5: " + path);
    StimulusRecord s;
    s.image_id = parse_int(cols[0]);
    s.category_id = parse_int(cols[1]);
    s.image_ref = cols[2];
    s.coarse_text = cols[3];
    s.fine_text = cols[4];
    catalog.push_back(std::move(s));
  }
  return catalog;
}

}  // namespace

void save_split(const TrialSet& ts, const std::string& dir) {
  ts.validate();
  fs::create_directories(dir);

  KvList meta;
  meta.emplace_back("split", split_name(ts.split));
  meta.emplace_back("sample_rate_hz", format_double(ts.sample_rate_hz()));
  meta.emplace_back("t0_ms", format_double(ts.trials.front().t0_ms));
  meta.emplace_back("channels", std::to_string(ts.channels()));
  meta.emplace_back("samples", std::to_string(ts.samples()));
  meta.emplace_back("channel_names", join(ts.channel_names, ","));
  write_kv_file(dir + "/meta.txt", meta);

  save_catalog(ts.catalog, dir + "/catalog.tsv");

  // group trials by subject, preserving original order within groups
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<const NeuralTrial*>> by_subject;
  for (const auto& t : ts.trials) {
    if (by_subject.find(t.subject_id) == by_subject.end())
      subjects.push_back(t.subject_id);
    by_subject[t.subject_id].push_back(&t);
  }

  for (const auto& subject : subjects) {
    const auto& trials = by_subject[subject];
    const auto n = static_cast<std::int64_t>(trials.size());
    const Eigen::Index c = ts.channels();
    const Eigen::Index t = ts.samples();

    TensorEntry signal;
    signal.name = "signal";
    signal.dtype = Dtype::f32;
    signal.shape = {n, c, t};
    signal.raw.resize(sizeof(float) * signal.element_count());
    float* p = reinterpret_cast<float*>(signal.raw.data());
    std::vector<std::int64_t> cat(n), img(n), rep(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const NeuralTrial& tr = *trials[static_cast<std::size_t>(i)];
      cat[i] = tr.category_id;
      img[i] = tr.image_id;
      rep[i] = tr.repetition;
      for (Eigen::Index r = 0; r < c; ++r)
        for (Eigen::Index s = 0; s < t; ++s)
          p[(i * c + r) * t + s] = tr.signal(r, s);
    }

    TensorFile tf;
    tf.set_meta("subject", subject);
    tf.tensors.push_back(std::move(signal));
    tf.add_i64("category_id", cat);
    tf.add_i64("image_id", img);
    tf.add_i64("repetition", rep);
    tf.save(dir + "/trials_" + subject + ".nvt");
  }
}

TrialSet load_split(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset split directory missing: " + dir);

  KvList meta = read_kv_file(dir + "/meta.txt");
  TrialSet ts;
  ts.split = split_from_name(kv_get(meta, "split"));
  const double fs_hz = parse_double(kv_get(meta, "sample_rate_hz"));
  const std::string* t0 = kv_find(meta, "t0_ms");
  const double t0_ms = t0 ? parse_double(*t0) : 0.0;
  for (auto& name : split(kv_get(meta, "channel_names"), ','))
    ts.channel_names.push_back(trim(name));

  ts.catalog = load_catalog(dir + "/catalog.tsv");

  std::vector<std::string> trial_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (starts_with(name, "trials_") && entry.path().extension() == ".nvt")
      trial_files.push_back(entry.path().string());
  }
  std::sort(trial_files.begin(), trial_files.end());
  if (trial_files.empty()) throw DataError("no trial files in " + dir);

  for (const auto& path : trial_files) {
    TensorFile tf = TensorFile::load(path);
    const std::string subject = tf.meta_get("subject");
    const TensorEntry& sig = tf.get("signal");
    if (sig.shape.size() != 3 || sig.dtype != Dtype::f32)
      throw DataError("signal tensor must be float32 rank-3 in " + path);
    const std::int64_t n = sig.shape[0];
    const auto c = static_cast<Eigen::Index>(sig.shape[1]);
    const auto t = static_cast<Eigen::Index>(sig.shape[2]);
    auto cat = tf.get("category_id").as_i64();
    auto img = tf.get("image_id").as_i64();
    auto rep = tf.get("repetition").as_i64();
    if (static_cast<std::int64_t>(cat.size()) != n ||
        static_cast<std::int64_t>(img.size()) != n ||
        static_cast<std::int64_t>(rep.size()) != n)
      throw DataError("index arrays do not match trial count in " + path);

    const float* p = reinterpret_cast<const float*>(sig.raw.data());
    for (std::int64_t i = 0; i < n; ++i) {
      NeuralTrial tr;
      tr.subject_id = subject;
      tr.category_id = cat[static_cast<std::size_t>(i)];
      tr.image_id = img[static_cast<std::size_t>(i)];
      tr.repetition = rep[static_cast<std::size_t>(i)];
      tr.sample_rate_hz = fs_hz;
      tr.t0_ms = t0_ms;
      tr.signal.resize(c, t);
      for (Eigen::Index r = 0; r < c; ++r)
        for (Eigen::Index s = 0; s < t; ++s)
          tr.signal(r, s) = p[(i * c + r) * t + s];
      ts.trials.push_back(std::move(tr));
    }
  }

  ts.validate();
  return ts;
}

void save_dataset(const TrialSet& train, const TrialSet& test,
                  const std::string& root) {
  if (train.split != Split::train || test.split != Split::test)
    throw DataError("save_dataset expects (train, test) splits in that order");
  fs::create_directories(root);
  KvList meta;
  meta.emplace_back("format", "dataset-v1");
  write_kv_file(root + "/meta.txt", meta);
  save_split(train, root + "/train");
  save_split(test, root + "/test");
}

TrialSet load_trialset(const std::string& root, Split split) {
  TrialSet ts = load_split(root + "/" + split_name(split));
  if (ts.split != split)
    throw DataError("split metadata disagrees with requested split in " + root);

  if (split == Split::test && fs::is_directory(root + "/train")) {
    TrialSet train = load_split(root + "/train");
    std::set<std::int64_t> train_cats;
    for (const auto& t : train.trials) train_cats.insert(t.category_id);
    for (const auto& t : ts.trials)
      if (train_cats.count(t.category_id))
        throw DataError("zero-shot violation: category " +
                        std::to_string(t.category_id) +
                        " appears in both train and test splits");
  }
  return ts;
}

}  // namespace neuvis
