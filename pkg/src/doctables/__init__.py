"""doctables: structure-aware analytics over templatized rich-text documents.

Recovers a header tree per document from visual formatting (with minimal
oracle help), amortizes that work across a collection through templates,
and executes a SQL subset over user-declared document tables where the
expensive predicates and projections run through a pluggable LLM oracle
with caching, cost accounting and span-level provenance.
"""

__version__ = "0.1.0"
