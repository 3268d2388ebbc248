"""Range filters over fixed-width keys: prefix Bloom filters, a succinct trie and their hybrid."""
